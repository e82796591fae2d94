#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "hpvd/net/model.hpp"
#include "hpvd/net/train.hpp"
#include "hpvd/volume.hpp"

namespace hpvd::net {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

inline json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["batch_size"] = cfg.batch_size;
  j["total_batches"] = cfg.total_batches;
  j["lr"] = cfg.lr;
  j["lr_drop"] = cfg.lr_drop;
  j["seed"] = cfg.seed;
  j["crop"] = {cfg.crop[0], cfg.crop[1], cfg.crop[2]};
  j["focal_alpha"] = cfg.loss.focal_alpha;
  j["focal_beta"] = cfg.loss.focal_beta;
  j["lambda_size"] = cfg.loss.lambda_size;
  j["bn_momentum"] = cfg.bn_momentum;
  j["sampling"] = "uniform15";
  return j;
}

/// FNV-1a hash of the canonical config serialization, recorded so a
/// checkpoint can be traced back to the run settings.
inline std::string config_hash(const TrainConfig& cfg) {
  const std::string s = train_config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace detail {

inline json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape}, {"data", t.v}};
}

inline Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<std::vector<int>>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace detail

struct Checkpoint {
  NetParams params;
  PhaseStats stats;
  TrainConfig config;
};

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json j;
  j["format"] = "hpvd-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = train_config_to_json(ck.config);
  j["config_hash"] = config_hash(ck.config);

  json stats = json::object();
  for (Phase p : all_phases())
    if (ck.stats.has(p)) {
      const auto& e = ck.stats.get(p);
      stats[phase_name(p)] = {{"mean", e.mean}, {"std", e.stddev}};
    }
  j["phase_stats"] = stats;

  json tensors = json::object();
  auto& params = const_cast<NetParams&>(ck.params);
  for_each_param(params, [&](const std::string& name, const char*, Tensor& t) {
    tensors[name] = detail::tensor_to_json(t);
  });
  j["tensors"] = tensors;

  json bn = json::object();
  for_each_bn(params, [&](const std::string& name, BnParams& b) {
    bn[name] = {{"run_mean", detail::tensor_to_json(b.run_mean)},
                {"run_var", detail::tensor_to_json(b.run_var)},
                {"count", b.count},
                {"momentum", b.momentum}};
  });
  j["bn_state"] = bn;

  std::ofstream out(path);
  require(out.good(), ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump() << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingFile, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedManifest,
         "malformed checkpoint " + path.string() + ": " + e.what());
  }
  require(j.value("format", "") == "hpvd-checkpoint", ErrorCode::MalformedManifest,
          "not a checkpoint file: " + path.string());
  require(j.value("version", 0) == kCheckpointVersion, ErrorCode::MalformedManifest,
          "unsupported checkpoint version in " + path.string());

  Checkpoint ck;
  const json& cfg = j.at("config");
  ck.config.batch_size = cfg.at("batch_size").get<int>();
  ck.config.total_batches = cfg.at("total_batches").get<int>();
  ck.config.lr = cfg.at("lr").get<double>();
  ck.config.lr_drop = cfg.at("lr_drop").get<double>();
  ck.config.seed = cfg.at("seed").get<std::uint64_t>();
  auto crop = cfg.at("crop").get<std::vector<int>>();
  ck.config.crop = {crop[0], crop[1], crop[2]};
  ck.config.loss.focal_alpha = cfg.at("focal_alpha").get<double>();
  ck.config.loss.focal_beta = cfg.at("focal_beta").get<double>();
  ck.config.loss.lambda_size = cfg.at("lambda_size").get<double>();
  ck.config.bn_momentum = cfg.at("bn_momentum").get<double>();

  for (Phase p : all_phases())
    if (j.at("phase_stats").contains(phase_name(p))) {
      const json& e = j.at("phase_stats").at(phase_name(p));
      ck.stats.set(p, e.at("mean").get<double>(), e.at("std").get<double>());
    }

  ck.params = make_net_params(ck.config.bn_momentum);
  for_each_param(ck.params, [&](const std::string& name, const char*, Tensor& t) {
    require(j.at("tensors").contains(name), ErrorCode::MalformedManifest,
            "checkpoint missing tensor " + name);
    Tensor loaded = detail::tensor_from_json(j.at("tensors").at(name));
    require(loaded.shape == t.shape, ErrorCode::MalformedManifest,
            "checkpoint tensor shape mismatch for " + name);
    t = std::move(loaded);
  });
  for_each_bn(ck.params, [&](const std::string& name, BnParams& b) {
    require(j.at("bn_state").contains(name), ErrorCode::MalformedManifest,
            "checkpoint missing bn state " + name);
    const json& e = j.at("bn_state").at(name);
    b.run_mean = detail::tensor_from_json(e.at("run_mean"));
    b.run_var = detail::tensor_from_json(e.at("run_var"));
    b.count = e.at("count").get<std::int64_t>();
    b.momentum = e.at("momentum").get<double>();
  });
  return ck;
}

}  // namespace hpvd::net
