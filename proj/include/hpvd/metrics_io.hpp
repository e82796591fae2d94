#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "hpvd/metrics.hpp"

namespace hpvd {
namespace metrics {

/// Shortest decimal string that round-trips to the same double; "inf" and
/// "-inf" for the sentinel thresholds. Keeps CSV output byte-reproducible.
inline std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// CSV columns: threshold,fps_per_study,sensitivity. Reported over the
/// clinically useful FPs range [0, 1]; points beyond 1 FP/study are omitted.
inline void write_froc_csv(const FrocCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoFailure, "cannot write " + path.string());
  out << "threshold,fps_per_study,sensitivity\n";
  for (const FrocPoint& p : curve.points) {
    if (p.fps_per_study > 1.0) continue;
    out << format_double(p.threshold) << ',' << format_double(p.fps_per_study)
        << ',' << format_double(p.sensitivity) << '\n';
  }
}

/// CSV columns: threshold,one_minus_specificity,tplr.
inline void write_lroc_csv(const LrocCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoFailure, "cannot write " + path.string());
  out << "threshold,one_minus_specificity,tplr\n";
  for (const LrocPoint& p : curve.points)
    out << format_double(p.threshold) << ',' << format_double(p.one_minus_specificity)
        << ',' << format_double(p.tplr) << '\n';
}

inline nlohmann::json auc_report_json(const AucEstimate& est) {
  return nlohmann::json{{"auc", est.auc},
                        {"var", est.variance},
                        {"ci95", {est.ci_lo, est.ci_hi}},
                        {"n_t", est.n_target},
                        {"n_c", est.n_control}};
}

inline nlohmann::json comparison_report_json(const PairedComparison& cmp,
                                             double p_bonferroni) {
  return nlohmann::json{{"auc_a", cmp.auc_a},
                        {"auc_b", cmp.auc_b},
                        {"delta", cmp.delta},
                        {"z", cmp.z},
                        {"p", cmp.p_two_sided},
                        {"p_bonferroni", p_bonferroni}};
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace metrics
}  // namespace hpvd
