#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hpvd/detection_io.hpp"
#include "hpvd/metrics.hpp"
#include "hpvd/metrics_io.hpp"
#include "hpvd/net/checkpoint.hpp"
#include "hpvd/net/infer.hpp"
#include "hpvd/net/train.hpp"
#include "hpvd/phantom.hpp"
#include "hpvd/postprocess.hpp"
#include "hpvd/volume_io.hpp"

namespace hpvd {
namespace cli {

namespace fs = std::filesystem;
using nlohmann::json;

// exit codes: 0 ok, 2 usage, 3 data error, 4 numeric divergence
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

namespace detail {

inline json load_optional_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingFile, "cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedManifest, "malformed config " + path + ": " + e.what());
  }
  return j;
}

template <typename T>
void patch(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

inline void patch_phantom_config(const json& j, phantom::PhantomConfig& cfg) {
  patch(j, "dims", cfg.dims);
  patch(j, "spacing_mm", cfg.spacing_mm);
  patch(j, "liver_center", cfg.liver_center);
  patch(j, "liver_axes", cfg.liver_axes);
  patch(j, "background_hu", cfg.background_hu);
  patch(j, "parenchyma_hu", cfg.parenchyma_hu);
  patch(j, "hcc_delta_hu", cfg.hcc_delta_hu);
  patch(j, "tace_hu", cfg.tace_hu);
  patch(j, "radius_xy", cfg.radius_xy);
  patch(j, "radius_z", cfg.radius_z);
  patch(j, "max_hcc_per_target", cfg.max_hcc_per_target);
  patch(j, "tace_in_target_prob", cfg.tace_in_target_prob);
  patch(j, "tace_only_control_frac", cfg.tace_only_control_frac);
  patch(j, "n_speckles", cfg.n_speckles);
  patch(j, "speckle_hu", cfg.speckle_hu);
  patch(j, "noise_sigma", cfg.noise_sigma);
  if (j.contains("phases"))
    cfg.phases = PhaseSet::parse(j.at("phases").get<std::string>());
}

inline std::vector<std::pair<DatasetIndex::Entry, fs::path>> sorted_entries(
    const fs::path& index_path) {
  DatasetIndex idx = load_dataset_index(index_path);
  std::vector<std::pair<DatasetIndex::Entry, fs::path>> out;
  const fs::path base = index_path.parent_path();
  for (const auto& e : idx.studies) out.push_back({e, base / e.path});
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first.id < b.first.id; });
  return out;
}

inline std::array<int, 3> parse_crop(const std::string& s) {
  std::array<int, 3> out = {0, 0, 0};
  std::size_t field = 0, pos = 0;
  while (field < 3 && pos < s.size()) {
    std::size_t next = s.find_first_of("x,", pos);
    if (next == std::string::npos) next = s.size();
    out[field++] = std::stoi(s.substr(pos, next - pos));
    pos = next + 1;
  }
  require(field == 3, ErrorCode::BadArgument, "crop must be like 64x64x16");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// subcommand payloads
// ---------------------------------------------------------------------------

inline int cmd_phantom(int n_target, int n_control, std::uint64_t seed,
                       const std::string& out_dir, std::string prefix,
                       const std::string& config_path) {
  phantom::PhantomConfig cfg;
  detail::patch_phantom_config(detail::load_optional_config(config_path), cfg);
  if (prefix.empty()) prefix = "s" + std::to_string(seed);
  auto ds = phantom::generate_dataset(cfg, n_target, n_control, seed, prefix);
  phantom::save_dataset(ds, out_dir);
  std::cout << "wrote " << ds.studies.size() << " studies to " << out_dir << "\n";
  return kExitOk;
}

inline int cmd_train(const std::string& dataset_path, const std::string& out_dir,
                     net::TrainConfig cfg) {
  auto entries = detail::sorted_entries(dataset_path);
  require(!entries.empty(), ErrorCode::BadArgument, "dataset is empty");

  std::vector<Study> studies;
  for (const auto& [e, path] : entries) studies.push_back(load_study(path));

  // Corpus-level phase statistics from the training split.
  PhaseStats stats;
  for (Phase p : all_phases()) {
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (const Study& s : studies) {
      auto it = s.volumes.find(p);
      if (it == s.volumes.end()) continue;
      for (double x : it->second.data) {
        sum += x;
        sumsq += x * x;
      }
      n += it->second.numel();
    }
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    const double var = sumsq / static_cast<double>(n) - mean * mean;
    require(var > 0, ErrorCode::BadArgument,
            std::string("degenerate HU distribution for phase ") + phase_name(p));
    stats.set(p, mean, std::sqrt(var));
  }

  for (Study& s : studies) {
    std::map<Phase, Volume> normalized;
    for (auto& [p, v] : s.volumes) normalized.emplace(p, normalize(v, stats));
    s.volumes = std::move(normalized);
  }

  net::TrainResult result = net::train(studies, cfg);

  fs::create_directories(out_dir);
  net::Checkpoint ck;
  ck.params = std::move(result.params);
  ck.stats = stats;
  ck.config = cfg;
  net::save_checkpoint(ck, fs::path(out_dir) / "checkpoint.json");

  std::ofstream log(fs::path(out_dir) / "train_log.csv");
  require(log.good(), ErrorCode::IoFailure, "cannot write train log");
  log << "batch,loss,lr,phases\n";
  for (const auto& b : result.log)
    log << b.batch << ',' << metrics::format_double(b.loss) << ','
        << metrics::format_double(b.lr) << ',' << b.phases.name() << '\n';

  std::cout << "trained " << cfg.total_batches << " batches; checkpoint in "
            << out_dir << "\n";
  return kExitOk;
}

inline int cmd_infer(const std::string& model_path, const std::string& dataset_path,
                     const std::string& phase_selector, const std::string& out_dir,
                     const net::InferConfig& icfg, const PostprocessConfig& pcfg) {
  net::Checkpoint ck = net::load_checkpoint(model_path);
  const PhaseSet requested = PhaseSet::parse(phase_selector);
  auto entries = detail::sorted_entries(dataset_path);

  std::vector<StudyDetections> raw, final_hcc, final_tace;
  for (const auto& [e, path] : entries) {
    StudyDetections r{e.id, {}, std::nullopt};
    StudyDetections h{e.id, {}, std::nullopt};
    StudyDetections t{e.id, {}, std::nullopt};
    try {
      Study s = load_study(path);
      std::vector<Detection> dets = net::infer_study(s, ck.params, ck.stats,
                                                     requested, icfg);
      r.detections = dets;
      PipelineResult pr = pipeline(dets, s, pcfg);
      h.detections = std::move(pr.hcc);
      t.detections = std::move(pr.tace);
    } catch (const Error& err) {
      // one bad study must not abort the batch run
      r.error = h.error = t.error = err.what();
    }
    raw.push_back(std::move(r));
    final_hcc.push_back(std::move(h));
    final_tace.push_back(std::move(t));
  }

  fs::create_directories(out_dir);
  save_detections(raw, fs::path(out_dir) / "detections_raw.json");
  save_detections(final_hcc, fs::path(out_dir) / "detections.json");
  save_detections(final_tace, fs::path(out_dir) / "detections_tace.json");
  std::cout << "inferred " << entries.size() << " studies with phases "
            << requested.name() << "\n";
  return kExitOk;
}

/// Shared by eval/compare and by tests that check CLI/API equivalence:
/// joins the dataset ground truth with a detections file.
inline std::vector<metrics::StudyEval> build_study_evals(
    const fs::path& dataset_path, const fs::path& detections_path) {
  auto entries = detail::sorted_entries(dataset_path);
  auto dets = load_detections(detections_path);
  std::map<std::string, const StudyDetections*> by_id;
  for (const auto& sd : dets) {
    require(by_id.emplace(sd.study_id, &sd).second, ErrorCode::MalformedManifest,
            "duplicate study id in detections: " + sd.study_id);
  }
  std::vector<metrics::StudyEval> evals;
  std::size_t known = 0;
  for (const auto& [e, path] : entries) {
    Study s = load_study(path);
    metrics::StudyEval ev;
    ev.study_id = e.id;
    for (const auto& l : s.lesions)
      (l.kind == LesionKind::HCC ? ev.gt_hcc : ev.gt_tace).push_back(l.box);
    ev.is_target = !ev.gt_hcc.empty();
    auto it = by_id.find(e.id);
    if (it != by_id.end()) {
      ++known;
      if (!it->second->error)
        for (const Detection& d : it->second->detections)
          if (d.kind == DetKind::HCC) ev.detections.push_back(d);
    }
    evals.push_back(std::move(ev));
  }
  require(known == by_id.size(), ErrorCode::BadArgument,
          "detections file references studies outside the dataset");
  return evals;
}

inline int cmd_eval(const std::string& detections_path, const std::string& dataset_path,
                    const std::string& mode, const std::string& out_dir) {
  require(mode == "froc" || mode == "lroc" || mode == "both", ErrorCode::BadArgument,
          "mode must be froc, lroc or both");
  auto evals = build_study_evals(dataset_path, detections_path);
  fs::create_directories(out_dir);
  if (mode == "froc" || mode == "both") {
    metrics::FrocCurve curve = metrics::froc(evals);
    metrics::write_froc_csv(curve, fs::path(out_dir) / "froc.csv");
    std::cout << "froc: sensitivity@0.125 FPs/study = "
              << metrics::format_double(metrics::sensitivity_at(curve, 0.125))
              << "\n";
  }
  if (mode == "lroc" || mode == "both") {
    metrics::LrocCurve curve = metrics::lroc(evals);
    metrics::write_lroc_csv(curve, fs::path(out_dir) / "lroc.csv");
    metrics::AucEstimate auc = metrics::auc_lroc(evals);
    metrics::write_json(metrics::auc_report_json(auc), fs::path(out_dir) / "auc.json");
    std::cout << "lroc: auc = " << metrics::format_double(auc.auc) << " ["
              << metrics::format_double(auc.ci_lo) << ", "
              << metrics::format_double(auc.ci_hi) << "]\n";
  }
  return kExitOk;
}

inline int cmd_compare(const std::string& dets_a, const std::string& dets_b,
                       const std::string& dataset_path, int m_tests,
                       const std::string& out_dir) {
  auto evals_a = build_study_evals(dataset_path, dets_a);
  auto evals_b = build_study_evals(dataset_path, dets_b);
  metrics::PairedComparison cmp = metrics::compare_auc_paired(evals_a, evals_b);
  const double p_adj = metrics::bonferroni({cmp.p_two_sided}, m_tests)[0];
  fs::create_directories(out_dir);
  metrics::write_json(metrics::comparison_report_json(cmp, p_adj),
                      fs::path(out_dir) / "comparison.json");
  std::cout << "delta = " << metrics::format_double(cmp.delta)
            << ", p = " << metrics::format_double(cmp.p_two_sided)
            << ", p_bonferroni = " << metrics::format_double(p_adj) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// argument parsing
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"hetero-phase volumetric HCC detection pipeline"};
  app.require_subcommand(1);

  // phantom
  auto* sc_phantom = app.add_subcommand("phantom", "generate a synthetic dataset");
  int n_target = 8, n_control = 8;
  std::uint64_t seed = 1;
  std::string out_dir = "out", prefix, config_path;
  sc_phantom->add_option("--n-target", n_target, "target studies (>=1 HCC lesion)");
  sc_phantom->add_option("--n-control", n_control, "control studies");
  sc_phantom->add_option("--seed", seed, "random seed");
  sc_phantom->add_option("--out", out_dir, "output directory")->required();
  sc_phantom->add_option("--prefix", prefix, "study id prefix");
  sc_phantom->add_option("--config", config_path, "JSON config overrides");

  // train
  auto* sc_train = app.add_subcommand("train", "train the detector");
  std::string dataset_path, train_out = "run";
  net::TrainConfig tcfg;
  std::string crop_text;
  sc_train->add_option("--dataset", dataset_path, "dataset index JSON")->required();
  sc_train->add_option("--out", train_out, "output directory")->required();
  sc_train->add_option("--batches", tcfg.total_batches, "total training batches");
  sc_train->add_option("--batch-size", tcfg.batch_size, "crops per batch");
  sc_train->add_option("--lr", tcfg.lr, "initial learning rate");
  sc_train->add_option("--seed", tcfg.seed, "random seed");
  sc_train->add_option("--crop", crop_text, "training crop, e.g. 64x64x16");
  std::string train_config;
  sc_train->add_option("--config", train_config, "JSON config overrides");

  // infer
  auto* sc_infer = app.add_subcommand("infer", "run detection on studies");
  std::string model_path, infer_dataset, phases_text = "NC,AP,VP,DP",
              infer_out = "out";
  net::InferConfig icfg;
  PostprocessConfig pcfg;
  sc_infer->add_option("--model", model_path, "checkpoint JSON")->required();
  sc_infer->add_option("--dataset", infer_dataset, "dataset index JSON")->required();
  sc_infer->add_option("--phases", phases_text, "phase subset, e.g. NC,VP");
  sc_infer->add_option("--out", infer_out, "output directory")->required();
  sc_infer->add_option("--window-depth", icfg.window_depth, "inference window depth");
  sc_infer->add_option("--overlap", icfg.overlap_depth, "window overlap depth");
  sc_infer->add_option("--score-min", icfg.score_min, "decode score threshold");
  sc_infer->add_option("--k-max", icfg.k_max, "max decoded peaks per study");
  sc_infer->add_option("--nms-iou", pcfg.nms_iou, "NMS IoU threshold");
  sc_infer->add_option("--liver-overlap", pcfg.liver_overlap_min,
                       "min liver overlap fraction");
  sc_infer->add_option("--tace-hu", pcfg.tace_hu_threshold, "TACE HU threshold");
  sc_infer->add_option("--tace-fraction", pcfg.tace_fraction, "TACE hot fraction");

  // eval
  auto* sc_eval = app.add_subcommand("eval", "FROC/LROC evaluation");
  std::string eval_dets, eval_dataset, eval_mode = "both", eval_out = "out";
  sc_eval->add_option("--detections", eval_dets, "detections JSON")->required();
  sc_eval->add_option("--dataset", eval_dataset, "dataset index JSON")->required();
  sc_eval->add_option("--mode", eval_mode, "froc | lroc | both");
  sc_eval->add_option("--out", eval_out, "output directory")->required();

  // compare
  auto* sc_compare = app.add_subcommand("compare", "paired AUC comparison");
  std::string cmp_a, cmp_b, cmp_dataset, cmp_out = "out";
  int m_tests = 1;
  sc_compare->add_option("--a", cmp_a, "detections JSON for detector A")->required();
  sc_compare->add_option("--b", cmp_b, "detections JSON for detector B")->required();
  sc_compare->add_option("--dataset", cmp_dataset, "dataset index JSON")->required();
  sc_compare->add_option("--m-tests", m_tests, "Bonferroni test count");
  sc_compare->add_option("--out", cmp_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sc_phantom->parsed())
      return cmd_phantom(n_target, n_control, seed, out_dir, prefix, config_path);
    if (sc_train->parsed()) {
      json j = detail::load_optional_config(train_config);
      detail::patch(j, "lambda_size", tcfg.loss.lambda_size);
      detail::patch(j, "focal_alpha", tcfg.loss.focal_alpha);
      detail::patch(j, "focal_beta", tcfg.loss.focal_beta);
      detail::patch(j, "bn_momentum", tcfg.bn_momentum);
      detail::patch(j, "lr_drop", tcfg.lr_drop);
      if (!crop_text.empty()) tcfg.crop = detail::parse_crop(crop_text);
      return cmd_train(dataset_path, train_out, tcfg);
    }
    if (sc_infer->parsed())
      return cmd_infer(model_path, infer_dataset, phases_text, infer_out, icfg, pcfg);
    if (sc_eval->parsed())
      return cmd_eval(eval_dets, eval_dataset, eval_mode, eval_out);
    if (sc_compare->parsed())
      return cmd_compare(cmp_a, cmp_b, cmp_dataset, m_tests, cmp_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::NumericDivergence ? kExitNumeric : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace cli
}  // namespace hpvd
