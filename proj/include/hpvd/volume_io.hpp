#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "hpvd/volume.hpp"

namespace hpvd {

namespace fs = std::filesystem;
using nlohmann::json;

/// On-disk storage width of the raw blob. Values are little-endian,
/// x-fastest row-major, matching the in-memory order.
enum class VolumeDtype { Int16, Float32 };

inline const char* dtype_name(VolumeDtype d) {
  return d == VolumeDtype::Int16 ? "int16le" : "f32le";
}

inline VolumeDtype dtype_from_name(const std::string& s) {
  if (s == "int16le") return VolumeDtype::Int16;
  if (s == "f32le") return VolumeDtype::Float32;
  fail(ErrorCode::MalformedManifest, "unknown volume dtype: " + s);
}

namespace detail {

inline json load_json_file(const fs::path& path, ErrorCode missing_code) {
  std::ifstream in(path);
  require(in.good(), missing_code, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedManifest,
         "malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

template <typename T>
T json_get(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key))
    fail(ErrorCode::MalformedManifest,
         "missing key '" + std::string(key) + "' in " + where.string());
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedManifest,
         "bad value for '" + std::string(key) + "' in " + where.string() +
             ": " + e.what());
  }
}

}  // namespace detail

/// Writes sidecar JSON plus raw blob. Int16 refuses values that are not
/// exactly representable, so a saved study reloads bit-identically.
inline void save_volume(const Volume& v, const fs::path& sidecar_path,
                        VolumeDtype dtype = VolumeDtype::Int16) {
  v.check_invariants();
  fs::path data_rel = sidecar_path.stem();
  data_rel += ".raw";
  fs::path data_path = sidecar_path.parent_path() / data_rel;

  json j;
  j["dims"] = {v.nx, v.ny, v.nz};
  j["spacing_mm"] = {v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]};
  j["phase"] = phase_name(v.phase);
  j["dtype"] = dtype_name(dtype);
  j["data_file"] = data_rel.string();

  std::ofstream side(sidecar_path);
  require(side.good(), ErrorCode::IoFailure, "cannot write " + sidecar_path.string());
  side << j.dump(2) << "\n";

  std::ofstream raw(data_path, std::ios::binary);
  require(raw.good(), ErrorCode::IoFailure, "cannot write " + data_path.string());
  if (dtype == VolumeDtype::Int16) {
    std::vector<std::int16_t> buf(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
      double x = v.data[i];
      auto q = static_cast<std::int16_t>(x);
      require(static_cast<double>(q) == x, ErrorCode::BadArgument,
              "value not representable as int16 while writing " + data_path.string());
      buf[i] = q;
    }
    raw.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(std::int16_t)));
  } else {
    std::vector<float> buf(v.data.begin(), v.data.end());
    raw.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  require(raw.good(), ErrorCode::IoFailure, "short write to " + data_path.string());
}

inline Volume load_volume(const fs::path& sidecar_path) {
  json j = detail::load_json_file(sidecar_path, ErrorCode::MissingFile);
  auto dims = detail::json_get<std::vector<int>>(j, "dims", sidecar_path);
  auto spacing = detail::json_get<std::vector<double>>(j, "spacing_mm", sidecar_path);
  require(dims.size() == 3 && spacing.size() == 3, ErrorCode::MalformedManifest,
          "dims/spacing_mm must have three entries in " + sidecar_path.string());
  VolumeDtype dtype =
      dtype_from_name(detail::json_get<std::string>(j, "dtype", sidecar_path));
  // phase is optional so mask grids can reuse the format
  Phase phase = Phase::NC;
  if (j.contains("phase")) phase = phase_from_name(j.at("phase").get<std::string>());

  Volume v(dims[0], dims[1], dims[2], {spacing[0], spacing[1], spacing[2]}, phase);
  fs::path data_path = sidecar_path.parent_path() /
                       detail::json_get<std::string>(j, "data_file", sidecar_path);
  std::ifstream raw(data_path, std::ios::binary);
  require(raw.good(), ErrorCode::MissingFile, "cannot open " + data_path.string());
  const std::size_t n = v.numel();
  if (dtype == VolumeDtype::Int16) {
    std::vector<std::int16_t> buf(n);
    raw.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(n * sizeof(std::int16_t)));
    require(static_cast<std::size_t>(raw.gcount()) == n * sizeof(std::int16_t),
            ErrorCode::IoFailure, "short read from " + data_path.string());
    for (std::size_t i = 0; i < n; ++i) v.data[i] = buf[i];
  } else {
    std::vector<float> buf(n);
    raw.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(n * sizeof(float)));
    require(static_cast<std::size_t>(raw.gcount()) == n * sizeof(float),
            ErrorCode::IoFailure, "short read from " + data_path.string());
    for (std::size_t i = 0; i < n; ++i) v.data[i] = buf[i];
  }
  v.check_invariants();
  return v;
}

inline void save_mask(const Mask& m, const fs::path& sidecar_path) {
  Volume v(m.nx, m.ny, m.nz, {1, 1, 1}, Phase::NC);
  for (std::size_t i = 0; i < m.data.size(); ++i) v.data[i] = m.data[i];
  save_volume(v, sidecar_path, VolumeDtype::Int16);
}

inline Mask load_mask(const fs::path& sidecar_path) {
  Volume v = load_volume(sidecar_path);
  Mask m(v.nx, v.ny, v.nz);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    require(v.data[i] == 0.0 || v.data[i] == 1.0, ErrorCode::MalformedManifest,
            "mask values must be 0 or 1 in " + sidecar_path.string());
    m.data[i] = static_cast<std::uint8_t>(v.data[i]);
  }
  return m;
}

/// Writes manifest.json plus per-phase volume files into dir.
inline void save_study(const Study& s, const fs::path& dir,
                       VolumeDtype dtype = VolumeDtype::Int16) {
  s.check_invariants();
  fs::create_directories(dir);
  json j;
  j["id"] = s.id;
  json phases = json::object();
  for (const auto& [p, v] : s.volumes) {
    std::string fname = std::string(phase_name(p)) + ".json";
    save_volume(v, dir / fname, dtype);
    phases[phase_name(p)] = fname;
  }
  j["phases"] = phases;
  if (s.liver_mask) {
    save_mask(*s.liver_mask, dir / "liver_mask.json");
    j["liver_mask"] = "liver_mask.json";
  }
  json lesions = json::array();
  for (const auto& l : s.lesions) {
    json e;
    e["kind"] = lesion_kind_name(l.kind);
    e["box"] = {static_cast<int>(l.box.x0), static_cast<int>(l.box.y0),
                static_cast<int>(l.box.z0), static_cast<int>(l.box.x1),
                static_cast<int>(l.box.y1), static_cast<int>(l.box.z1)};
    lesions.push_back(e);
  }
  j["lesions"] = lesions;
  std::ofstream out(dir / "manifest.json");
  require(out.good(), ErrorCode::IoFailure,
          "cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << "\n";
}

/// Loads a study from its manifest directory and checks all invariants.
inline Study load_study(const fs::path& dir) {
  fs::path manifest = dir / "manifest.json";
  json j = detail::load_json_file(manifest, ErrorCode::MissingFile);
  Study s;
  s.id = detail::json_get<std::string>(j, "id", manifest);
  if (!j.contains("phases") || !j.at("phases").is_object() || j.at("phases").empty())
    fail(ErrorCode::MalformedManifest,
         "manifest must declare at least one phase: " + manifest.string());
  for (const auto& [name, rel] : j.at("phases").items()) {
    Phase p = phase_from_name(name);
    Volume v = load_volume(dir / rel.get<std::string>());
    require(v.phase == p, ErrorCode::MalformedManifest,
            "phase tag mismatch for " + name + " in " + manifest.string());
    s.volumes.emplace(p, std::move(v));
  }
  if (j.contains("liver_mask") && !j.at("liver_mask").is_null())
    s.liver_mask = load_mask(dir / j.at("liver_mask").get<std::string>());
  if (j.contains("lesions")) {
    for (const auto& e : j.at("lesions")) {
      auto box = detail::json_get<std::vector<double>>(e, "box", manifest);
      require(box.size() == 6, ErrorCode::MalformedManifest,
              "lesion box must have six entries in " + manifest.string());
      LesionAnnotation l;
      l.box = {box[0], box[1], box[2], box[3], box[4], box[5]};
      l.kind = lesion_kind_from_name(detail::json_get<std::string>(e, "kind", manifest));
      s.lesions.push_back(l);
    }
  }
  s.check_invariants();
  return s;
}

/// Dataset index: list of study directories plus target/control labels.
struct DatasetIndex {
  struct Entry {
    std::string id;
    std::string path;  // relative to the index file's directory
    bool is_target = false;
  };
  std::vector<Entry> studies;
};

inline void save_dataset_index(const DatasetIndex& idx, const fs::path& path) {
  json j;
  json arr = json::array();
  for (const auto& e : idx.studies)
    arr.push_back({{"id", e.id}, {"path", e.path}, {"is_target", e.is_target}});
  j["studies"] = arr;
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline DatasetIndex load_dataset_index(const fs::path& path) {
  json j = detail::load_json_file(path, ErrorCode::MissingFile);
  DatasetIndex idx;
  for (const auto& e : detail::json_get<json>(j, "studies", path)) {
    DatasetIndex::Entry entry;
    entry.id = detail::json_get<std::string>(e, "id", path);
    entry.path = detail::json_get<std::string>(e, "path", path);
    entry.is_target = detail::json_get<bool>(e, "is_target", path);
    idx.studies.push_back(entry);
  }
  return idx;
}

}  // namespace hpvd
