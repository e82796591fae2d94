#pragma once

#include <cmath>
#include <vector>

#include "hpvd/box.hpp"
#include "hpvd/net/model.hpp"
#include "hpvd/tensor.hpp"

namespace hpvd::net {

struct LossConfig {
  double focal_alpha = 2.0;
  double focal_beta = 4.0;
  double lambda_size = 0.1;
};

/// One supervised center cell on the head grid.
struct CenterTarget {
  int n = 0;                    // batch sample
  int iz = 0, iy = 0, ix = 0;   // head-grid cell (z unstrided, y/x stride 4)
  std::array<double, 3> log_extent = {0, 0, 0};  // log voxel extents (x,y,z)
};

struct HeatmapTargets {
  Tensor heatmap;                     // [N,1,D,Hf,Wf] in [0,1], 1 at centers
  std::vector<CenterTarget> centers;  // one entry per lesion box
};

/// Builds Gaussian-splatted center targets. The Gaussian radius per axis is
/// one third of the box extent on the head grid; overlapping splats take the
/// max. All lesion kinds supervise identically — the detector localizes
/// suspicious regions without discriminating type.
inline HeatmapTargets build_targets(
    const std::vector<std::vector<Box3>>& boxes_per_sample, int D, int Hf, int Wf,
    int stride = kHeadStride) {
  const int N = static_cast<int>(boxes_per_sample.size());
  HeatmapTargets t;
  t.heatmap = Tensor({N, 1, D, Hf, Wf});
  const std::size_t plane = static_cast<std::size_t>(Hf) * Wf;
  const std::size_t vol = static_cast<std::size_t>(D) * plane;
  for (int n = 0; n < N; ++n) {
    double* hm = t.heatmap.data() + vol * n;
    for (const Box3& b : boxes_per_sample[static_cast<std::size_t>(n)]) {
      auto c = b.center();
      auto e = b.extent();
      auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
      CenterTarget ct;
      ct.n = n;
      ct.ix = clampi(static_cast<int>(std::floor(c[0] / stride)), Wf);
      ct.iy = clampi(static_cast<int>(std::floor(c[1] / stride)), Hf);
      ct.iz = clampi(static_cast<int>(std::floor(c[2])), D);
      ct.log_extent = {std::log(e[0]), std::log(e[1]), std::log(e[2])};
      // sigma = radius/3 with radius = extent/3 on the head grid
      double sx = std::max(e[0] / stride / 9.0, 0.5);
      double sy = std::max(e[1] / stride / 9.0, 0.5);
      double sz = std::max(e[2] / 9.0, 0.5);
      int rx = static_cast<int>(std::ceil(3.0 * sx));
      int ry = static_cast<int>(std::ceil(3.0 * sy));
      int rz = static_cast<int>(std::ceil(3.0 * sz));
      for (int z = std::max(0, ct.iz - rz); z <= std::min(D - 1, ct.iz + rz); ++z)
        for (int y = std::max(0, ct.iy - ry); y <= std::min(Hf - 1, ct.iy + ry); ++y)
          for (int x = std::max(0, ct.ix - rx); x <= std::min(Wf - 1, ct.ix + rx); ++x) {
            double dz = (z - ct.iz) / sz, dy = (y - ct.iy) / sy, dx = (x - ct.ix) / sx;
            double g = std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
            double& cell = hm[(static_cast<std::size_t>(z) * Hf + y) * Wf + x];
            if (g > cell) cell = g;
          }
      hm[(static_cast<std::size_t>(ct.iz) * Hf + ct.iy) * Wf + ct.ix] = 1.0;
      t.centers.push_back(ct);
    }
  }
  return t;
}

struct LossResult {
  double loss = 0.0;
  double focal = 0.0;
  double size_l1 = 0.0;
  Tensor d_heatmap;  // w.r.t. the sigmoided heatmap
  Tensor d_size;
};

/// Penalty-reduced focal loss on the heatmap plus L1 on the size channels at
/// ground-truth centers, both normalized by the number of centers (min 1).
inline LossResult centernet_loss(const Tensor& heatmap, const Tensor& size_map,
                                 const HeatmapTargets& targets,
                                 const LossConfig& cfg = {}) {
  require(heatmap.shape == targets.heatmap.shape, ErrorCode::DimsMismatch,
          "heatmap/target shape mismatch");
  require(size_map.dim(1) == 3, ErrorCode::BadArgument, "size map must have 3 channels");
  const double norm = std::max<std::size_t>(targets.centers.size(), 1);
  const double a = cfg.focal_alpha, b = cfg.focal_beta;

  LossResult r;
  r.d_heatmap = Tensor(heatmap.shape);
  r.d_size = Tensor(size_map.shape);

  double focal = 0.0;
  for (std::size_t i = 0; i < heatmap.v.size(); ++i) {
    double y = heatmap.v[i];
    y = std::min(std::max(y, 1e-12), 1.0 - 1e-12);
    const double t = targets.heatmap.v[i];
    if (t == 1.0) {
      const double om = 1.0 - y;
      focal -= std::pow(om, a) * std::log(y);
      r.d_heatmap.v[i] =
          (a * std::pow(om, a - 1.0) * std::log(y) - std::pow(om, a) / y) / norm;
    } else {
      const double w = std::pow(1.0 - t, b);
      focal -= w * std::pow(y, a) * std::log(1.0 - y);
      r.d_heatmap.v[i] = -w *
                         (a * std::pow(y, a - 1.0) * std::log(1.0 - y) -
                          std::pow(y, a) / (1.0 - y)) /
                         norm;
    }
  }
  r.focal = focal / norm;

  const int D = size_map.dim(2), Hf = size_map.dim(3), Wf = size_map.dim(4);
  double l1 = 0.0;
  for (const CenterTarget& ct : targets.centers) {
    for (int axis = 0; axis < 3; ++axis) {
      const std::size_t idx =
          (((static_cast<std::size_t>(ct.n) * 3 + axis) * D + ct.iz) * Hf + ct.iy) *
              Wf +
          ct.ix;
      const double diff = size_map.v[idx] - ct.log_extent[static_cast<std::size_t>(axis)];
      l1 += std::abs(diff);
      const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      r.d_size.v[idx] += cfg.lambda_size * sign / norm;
    }
  }
  r.size_l1 = l1 / norm;
  r.loss = r.focal + cfg.lambda_size * r.size_l1;
  require(std::isfinite(r.loss), ErrorCode::NumericDivergence, "non-finite loss");
  return r;
}

}  // namespace hpvd::net
