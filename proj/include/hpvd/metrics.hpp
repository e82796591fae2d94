#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "hpvd/box.hpp"

namespace hpvd {
namespace metrics {

/// One study prepared for evaluation: ground truth plus post-pipeline
/// HCC-kind detections.
struct StudyEval {
  std::string study_id;
  bool is_target = false;  // has >= 1 untreated HCC lesion
  std::vector<Box3> gt_hcc;
  std::vector<Box3> gt_tace;
  std::vector<Detection> detections;

  void check() const {
    require(is_target == !gt_hcc.empty(), ErrorCode::BadArgument,
            "is_target must mirror gt_hcc being nonempty: " + study_id);
  }
};

enum class DetLabel { TP, FP, Ignored };

struct MatchResult {
  std::vector<DetLabel> labels;        // per detection
  std::vector<int> tp_lesion;          // lesion index for TP, -1 otherwise
  std::vector<bool> lesion_detected;   // per gt_hcc lesion
  std::vector<double> lesion_max_score;  // max score among flagging detections
  std::vector<double> fp_scores;
};

/// Applies the lesion flagging criterion per detection. A detection is TP if
/// it flags any HCC lesion (assigned to the one with highest IoBB); one that
/// flags only TACE lesions is ignored (neither TP nor FP); the rest are FP.
/// A lesion counts detected when at least one detection flags it.
inline MatchResult match_study(const StudyEval& e, double tau_iobb = kDefaultIobbTau) {
  e.check();
  MatchResult r;
  r.labels.resize(e.detections.size(), DetLabel::FP);
  r.tp_lesion.resize(e.detections.size(), -1);
  r.lesion_detected.assign(e.gt_hcc.size(), false);
  r.lesion_max_score.assign(e.gt_hcc.size(),
                            -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < e.detections.size(); ++i) {
    const Detection& d = e.detections[i];
    int best = -1;
    double best_iobb = -1.0;
    for (std::size_t l = 0; l < e.gt_hcc.size(); ++l) {
      if (!flag_match(d.box, e.gt_hcc[l], tau_iobb)) continue;
      r.lesion_detected[l] = true;
      r.lesion_max_score[l] = std::max(r.lesion_max_score[l], d.score);
      double ib = iobb3(d.box, e.gt_hcc[l]);
      if (ib > best_iobb) {
        best_iobb = ib;
        best = static_cast<int>(l);
      }
    }
    if (best >= 0) {
      r.labels[i] = DetLabel::TP;
      r.tp_lesion[i] = best;
      continue;
    }
    bool tace_only = false;
    for (const Box3& t : e.gt_tace)
      if (flag_match(d.box, t, tau_iobb)) {
        tace_only = true;
        break;
      }
    r.labels[i] = tace_only ? DetLabel::Ignored : DetLabel::FP;
    if (r.labels[i] == DetLabel::FP) r.fp_scores.push_back(d.score);
  }
  return r;
}

struct FrocPoint {
  double threshold = 0.0;
  double fps_per_study = 0.0;
  double sensitivity = 0.0;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // one per distinct score, descending threshold
  int n_studies = 0;
  int n_lesions = 0;
};

/// FROC sweep. Sensitivity counts detected HCC lesions over all target
/// studies; FPs are averaged over every study (targets and controls).
inline FrocCurve froc(const std::vector<StudyEval>& evals,
                      double tau_iobb = kDefaultIobbTau) {
  require(!evals.empty(), ErrorCode::BadArgument, "froc needs >= 1 study");
  FrocCurve curve;
  curve.n_studies = static_cast<int>(evals.size());

  std::vector<double> lesion_scores;  // max flagging score per lesion
  std::vector<double> fp_scores;
  std::set<double> thresholds;
  for (const StudyEval& e : evals) {
    MatchResult m = match_study(e, tau_iobb);
    curve.n_lesions += static_cast<int>(e.gt_hcc.size());
    lesion_scores.insert(lesion_scores.end(), m.lesion_max_score.begin(),
                         m.lesion_max_score.end());
    fp_scores.insert(fp_scores.end(), m.fp_scores.begin(), m.fp_scores.end());
    for (const Detection& d : e.detections) thresholds.insert(d.score);
  }
  require(curve.n_lesions > 0, ErrorCode::BadArgument,
          "froc needs >= 1 ground-truth lesion");

  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
    const double t = *it;
    int detected = 0;
    for (double s : lesion_scores)
      if (s >= t) ++detected;
    int fps = 0;
    for (double s : fp_scores)
      if (s >= t) ++fps;
    curve.points.push_back({t, static_cast<double>(fps) / curve.n_studies,
                            static_cast<double>(detected) / curve.n_lesions});
  }
  return curve;
}

/// Step-function read: the sensitivity of the best threshold whose FPs/study
/// does not exceed the target. 0 when no threshold qualifies.
inline double sensitivity_at(const FrocCurve& curve, double fps_target = 0.125) {
  double best = 0.0;
  for (const FrocPoint& p : curve.points)
    if (p.fps_per_study <= fps_target) best = std::max(best, p.sensitivity);
  return best;
}

struct LrocPoint {
  double threshold = 0.0;
  double one_minus_specificity = 0.0;
  double tplr = 0.0;
};

struct LrocCurve {
  std::vector<LrocPoint> points;
  int n_target = 0;
  int n_control = 0;
};

/// Top-1 study summary used by LROC/AUC: the study's maximally suspicious
/// detection. A study without detections scores -inf and can never localize.
struct Top1 {
  double score = -std::numeric_limits<double>::infinity();
  bool localized = false;
  bool is_target = false;
};

inline std::vector<Top1> top1_summaries(const std::vector<StudyEval>& evals,
                                        double tau_iobb = kDefaultIobbTau) {
  std::vector<Top1> out;
  for (const StudyEval& e : evals) {
    e.check();
    Top1 t;
    t.is_target = e.is_target;
    const Detection* best = nullptr;
    for (const Detection& d : e.detections)
      if (!best || d.score > best->score) best = &d;
    if (best) {
      t.score = best->score;
      for (const Box3& g : e.gt_hcc)
        if (flag_match(best->box, g, tau_iobb)) {
          t.localized = true;
          break;
        }
    }
    out.push_back(t);
  }
  return out;
}

inline LrocCurve lroc(const std::vector<StudyEval>& evals,
                      double tau_iobb = kDefaultIobbTau) {
  const auto tops = top1_summaries(evals, tau_iobb);
  LrocCurve curve;
  std::set<double> finite_scores;
  int loc_total = 0;
  for (const Top1& t : tops) {
    curve.n_target += t.is_target;
    curve.n_control += !t.is_target;
    if (std::isfinite(t.score)) finite_scores.insert(t.score);
    if (t.is_target && t.localized) ++loc_total;
  }
  require(curve.n_target >= 1 && curve.n_control >= 1, ErrorCode::BadArgument,
          "lroc needs >= 1 target and >= 1 control study");

  auto point_at = [&](double t) {
    int tp = 0, fp = 0;
    for (const Top1& s : tops) {
      if (s.is_target) {
        if (s.localized && s.score >= t) ++tp;
      } else if (s.score >= t) {
        ++fp;
      }
    }
    return LrocPoint{t, static_cast<double>(fp) / curve.n_control,
                     static_cast<double>(tp) / curve.n_target};
  };

  const double inf = std::numeric_limits<double>::infinity();
  curve.points.push_back({inf, 0.0, 0.0});
  for (auto it = finite_scores.rbegin(); it != finite_scores.rend(); ++it)
    curve.points.push_back(point_at(*it));
  curve.points.push_back(
      {-inf, 1.0, static_cast<double>(loc_total) / curve.n_target});
  return curve;
}

/// Trapezoidal area under an LROC curve (cross-check for the pairwise
/// estimator; they agree exactly when no scores tie).
inline double trapezoid_area(const LrocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const LrocPoint& a = curve.points[i - 1];
    const LrocPoint& b = curve.points[i];
    area += (b.one_minus_specificity - a.one_minus_specificity) *
            (a.tplr + b.tplr) / 2.0;
  }
  return area;
}

struct AucEstimate {
  double auc = 0.0;
  double variance = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int n_target = 0;
  int n_control = 0;
};

namespace detail {

inline double psi(double a, double b) {
  if (a > b) return 1.0;
  if (a == b) return 0.5;
  return 0.0;
}

struct AucComponents {
  double auc = 0.0;
  std::vector<double> v;  // per target:  L_i * mean_j psi(s_i, s_j)
  std::vector<double> w;  // per control: mean_i L_i * psi(s_i, s_j)
};

/// Structural components of the nonparametric LROC-AUC estimator:
/// the kernel is L_i * psi(s_i, s_j) over all (target, control) pairs.
inline AucComponents auc_components(const std::vector<Top1>& tops) {
  AucComponents c;
  std::vector<const Top1*> targets, controls;
  for (const Top1& t : tops) (t.is_target ? targets : controls).push_back(&t);
  const std::size_t nt = targets.size(), nc = controls.size();
  require(nt >= 1 && nc >= 1, ErrorCode::BadArgument,
          "AUC needs >= 1 target and >= 1 control");
  c.v.assign(nt, 0.0);
  c.w.assign(nc, 0.0);
  for (std::size_t i = 0; i < nt; ++i) {
    if (!targets[i]->localized) continue;  // kernel is 0 for unlocalized
    for (std::size_t j = 0; j < nc; ++j) {
      const double k = psi(targets[i]->score, controls[j]->score);
      c.v[i] += k;
      c.w[j] += k;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < nt; ++i) {
    total += c.v[i];
    c.v[i] /= static_cast<double>(nc);
  }
  for (std::size_t j = 0; j < nc; ++j) c.w[j] /= static_cast<double>(nt);
  c.auc = total / (static_cast<double>(nt) * static_cast<double>(nc));
  return c;
}

inline double sample_variance(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(n - 1);
}

}  // namespace detail

/// Nonparametric LROC-AUC with variance from structural components and a
/// normal-approximation 95% CI clipped to [0, 1].
inline AucEstimate auc_lroc(const std::vector<StudyEval>& evals,
                            double tau_iobb = kDefaultIobbTau) {
  const auto tops = top1_summaries(evals, tau_iobb);
  detail::AucComponents c = detail::auc_components(tops);
  AucEstimate est;
  est.n_target = static_cast<int>(c.v.size());
  est.n_control = static_cast<int>(c.w.size());
  require(est.n_target >= 2 && est.n_control >= 2, ErrorCode::BadArgument,
          "variance needs >= 2 studies per arm");
  est.auc = c.auc;
  est.variance = detail::sample_variance(c.v) / est.n_target +
                 detail::sample_variance(c.w) / est.n_control;
  const double half = 1.96 * std::sqrt(est.variance);
  est.ci_lo = std::max(0.0, est.auc - half);
  est.ci_hi = std::min(1.0, est.auc + half);
  return est;
}

struct PairedComparison {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double delta = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
};

/// Paired comparison of two detectors evaluated on the same studies in the
/// same order. The variance of the difference keeps the covariance through
/// per-study component differences.
inline PairedComparison compare_auc_paired(const std::vector<StudyEval>& evals_a,
                                           const std::vector<StudyEval>& evals_b,
                                           double tau_iobb = kDefaultIobbTau) {
  require(evals_a.size() == evals_b.size(), ErrorCode::BadArgument,
          "paired comparison needs identical study sets");
  for (std::size_t i = 0; i < evals_a.size(); ++i) {
    require(evals_a[i].study_id == evals_b[i].study_id &&
                evals_a[i].is_target == evals_b[i].is_target,
            ErrorCode::BadArgument,
            "paired comparison study mismatch at position " + std::to_string(i));
  }
  const auto tops_a = top1_summaries(evals_a, tau_iobb);
  const auto tops_b = top1_summaries(evals_b, tau_iobb);
  detail::AucComponents ca = detail::auc_components(tops_a);
  detail::AucComponents cb = detail::auc_components(tops_b);
  const std::size_t nt = ca.v.size(), nc = ca.w.size();
  require(nt >= 2 && nc >= 2, ErrorCode::BadArgument,
          "variance needs >= 2 studies per arm");

  PairedComparison out;
  out.auc_a = ca.auc;
  out.auc_b = cb.auc;
  out.delta = ca.auc - cb.auc;
  std::vector<double> dv(nt), dw(nc);
  for (std::size_t i = 0; i < nt; ++i) dv[i] = ca.v[i] - cb.v[i];
  for (std::size_t j = 0; j < nc; ++j) dw[j] = ca.w[j] - cb.w[j];
  const double var = detail::sample_variance(dv) / static_cast<double>(nt) +
                     detail::sample_variance(dw) / static_cast<double>(nc);
  if (var <= 0.0) {
    out.z = out.delta == 0.0 ? 0.0
                             : std::copysign(std::numeric_limits<double>::infinity(),
                                             out.delta);
  } else {
    out.z = out.delta / std::sqrt(var);
  }
  out.p_two_sided = std::isinf(out.z) ? 0.0 : std::erfc(std::abs(out.z) / std::sqrt(2.0));
  return out;
}

inline std::vector<double> bonferroni(const std::vector<double>& p_values, int m) {
  require(m >= static_cast<int>(p_values.size()), ErrorCode::BadArgument,
          "bonferroni m must cover the number of tests");
  std::vector<double> out;
  for (double p : p_values) {
    require(p >= 0.0 && p <= 1.0, ErrorCode::BadArgument,
            "p-values must lie in [0, 1]");
    out.push_back(std::min(1.0, m * p));
  }
  return out;
}

}  // namespace metrics
}  // namespace hpvd
