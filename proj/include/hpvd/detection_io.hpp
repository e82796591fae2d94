#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpvd/box.hpp"
#include "hpvd/error.hpp"

namespace hpvd {

/// Per-study prediction record. A failed study carries an error string and
/// no detections so one bad study cannot abort a batch run.
struct StudyDetections {
  std::string study_id;
  std::vector<Detection> detections;
  std::optional<std::string> error;
};

inline nlohmann::json detections_to_json(const std::vector<StudyDetections>& all) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& sd : all) {
    nlohmann::json j;
    j["study_id"] = sd.study_id;
    if (sd.error) {
      j["error"] = *sd.error;
    } else {
      nlohmann::json dets = nlohmann::json::array();
      for (const auto& d : sd.detections) {
        dets.push_back({{"box", {d.box.x0, d.box.y0, d.box.z0, d.box.x1, d.box.y1, d.box.z1}},
                        {"score", d.score},
                        {"kind", det_kind_name(d.kind)}});
      }
      j["detections"] = dets;
    }
    arr.push_back(j);
  }
  return arr;
}

inline void save_detections(const std::vector<StudyDetections>& all,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoFailure, "cannot write " + path.string());
  out << detections_to_json(all).dump(2) << "\n";
}

inline std::vector<StudyDetections> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingFile, "cannot open " + path.string());
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::MalformedManifest,
         "malformed detections JSON in " + path.string() + ": " + e.what());
  }
  require(arr.is_array(), ErrorCode::MalformedManifest,
          "detections file must be a JSON array: " + path.string());
  std::vector<StudyDetections> out;
  for (const auto& j : arr) {
    StudyDetections sd;
    require(j.contains("study_id"), ErrorCode::MalformedManifest,
            "detection record without study_id in " + path.string());
    sd.study_id = j.at("study_id").get<std::string>();
    if (j.contains("error")) {
      sd.error = j.at("error").get<std::string>();
    } else if (j.contains("detections")) {
      for (const auto& e : j.at("detections")) {
        auto b = e.at("box").get<std::vector<double>>();
        require(b.size() == 6, ErrorCode::MalformedManifest,
                "detection box must have six entries in " + path.string());
        Detection d;
        d.box = {b[0], b[1], b[2], b[3], b[4], b[5]};
        d.score = e.at("score").get<double>();
        d.kind = det_kind_from_name(e.at("kind").get<std::string>());
        sd.detections.push_back(d);
      }
    }
    out.push_back(std::move(sd));
  }
  return out;
}

}  // namespace hpvd
