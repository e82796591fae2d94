#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hpvd/box.hpp"
#include "hpvd/volume.hpp"

namespace hpvd {

struct PostprocessConfig {
  double nms_iou = 0.1;
  double liver_overlap_min = 0.30;
  double tace_hu_threshold = 200.0;  // voxels strictly above count as lipiodol
  double tace_fraction = 0.01;       // TACE iff hot fraction strictly exceeds this
};

/// Greedy NMS by descending score (ties keep earlier list position). A box
/// is suppressed iff its IoU with an already-kept higher-score box exceeds
/// the threshold. Output is sorted by descending score.
inline std::vector<Detection> nms(const std::vector<Detection>& dets,
                                  double iou_thresh = 0.1) {
  for (const Detection& d : dets)
    require(std::isfinite(d.score), ErrorCode::BadArgument,
            "nms requires finite scores");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (const Detection& k : kept)
      if (iou3(dets[i].box, k.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(dets[i]);
  }
  return kept;
}

namespace detail {

/// Integer voxel ranges whose centers fall inside the box clipped to the
/// grid: center i+0.5 in [lo, hi) gives i in [ceil(lo-0.5), ceil(hi-0.5)).
struct VoxelSpan {
  int x0, x1, y0, y1, z0, z1;
  bool empty() const { return x0 >= x1 || y0 >= y1 || z0 >= z1; }
  std::int64_t count() const {
    return static_cast<std::int64_t>(x1 - x0) * (y1 - y0) * (z1 - z0);
  }
};

inline int center_lo(double lo) { return static_cast<int>(std::ceil(lo - 0.5)); }
inline int center_hi(double hi) { return static_cast<int>(std::ceil(hi - 0.5)); }

inline VoxelSpan clip_to_grid(const Box3& b, int nx, int ny, int nz) {
  VoxelSpan s;
  s.x0 = std::max(0, center_lo(b.x0));
  s.x1 = std::min(nx, center_hi(b.x1));
  s.y0 = std::max(0, center_lo(b.y0));
  s.y1 = std::min(ny, center_hi(b.y1));
  s.z0 = std::max(0, center_lo(b.z0));
  s.z1 = std::min(nz, center_hi(b.z1));
  return s;
}

}  // namespace detail

/// Keeps a detection iff at least liver_overlap_min of the voxels in its
/// (grid-clipped) box are liver. Pass-through when the study has no mask.
inline std::vector<Detection> liver_filter(const std::vector<Detection>& dets,
                                           const Mask* mask,
                                           double overlap_min = 0.30) {
  if (!mask) return dets;
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    detail::VoxelSpan s = detail::clip_to_grid(d.box, mask->nx, mask->ny, mask->nz);
    if (s.empty()) continue;
    std::int64_t inside = 0;
    for (int z = s.z0; z < s.z1; ++z)
      for (int y = s.y0; y < s.y1; ++y)
        for (int x = s.x0; x < s.x1; ++x)
          inside += mask->at(x, y, z);
    if (static_cast<double>(inside) / static_cast<double>(s.count()) >= overlap_min)
      kept.push_back(d);
  }
  return kept;
}

/// Picks the phase the HU threshold is evaluated on: NC when present
/// (lipiodol is hyperdense without contrast), else DP, VP, AP.
inline Phase tace_phase_for(const Study& s) {
  static constexpr Phase order[] = {Phase::NC, Phase::DP, Phase::VP, Phase::AP};
  for (Phase p : order)
    if (s.volumes.count(p)) return p;
  fail(ErrorCode::MissingPhase, "study " + s.id + " has no usable phase");
}

/// Threshold classifier for treated lesions: TACE iff the fraction of voxels
/// inside the box with HU strictly above tace_hu_threshold exceeds
/// tace_fraction. Evaluated on raw (unnormalized) HU values.
inline DetKind tace_classify(const Detection& det, const Study& s,
                             const PostprocessConfig& cfg = {}) {
  const Volume& v = s.volumes.at(tace_phase_for(s));
  detail::VoxelSpan span = detail::clip_to_grid(det.box, v.nx, v.ny, v.nz);
  if (span.empty()) return DetKind::HCC;
  std::int64_t hot = 0;
  for (int z = span.z0; z < span.z1; ++z)
    for (int y = span.y0; y < span.y1; ++y)
      for (int x = span.x0; x < span.x1; ++x)
        if (v.at(x, y, z) > cfg.tace_hu_threshold) ++hot;
  const double fraction = static_cast<double>(hot) / static_cast<double>(span.count());
  return fraction > cfg.tace_fraction ? DetKind::TACE : DetKind::HCC;
}

struct PipelineResult {
  std::vector<Detection> hcc;   // final findings, sorted by descending score
  std::vector<Detection> tace;  // classified as treated; reported separately
};

/// NMS -> liver filter -> TACE classification. Boxes and scores are never
/// altered, only dropped or labeled.
inline PipelineResult pipeline(const std::vector<Detection>& raw, const Study& s,
                               const PostprocessConfig& cfg = {}) {
  PipelineResult r;
  std::vector<Detection> kept = nms(raw, cfg.nms_iou);
  kept = liver_filter(kept, s.liver_mask ? &*s.liver_mask : nullptr,
                      cfg.liver_overlap_min);
  for (Detection d : kept) {
    d.kind = tace_classify(d, s, cfg);
    (d.kind == DetKind::HCC ? r.hcc : r.tace).push_back(d);
  }
  return r;
}

}  // namespace hpvd
