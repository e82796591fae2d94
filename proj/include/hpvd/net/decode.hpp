#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hpvd/box.hpp"
#include "hpvd/net/model.hpp"
#include "hpvd/tensor.hpp"

namespace hpvd::net {

/// Single-study head output as plain 3D fields on the head grid.
struct HeadFields {
  int D = 0, Hf = 0, Wf = 0;
  std::vector<double> heatmap;             // D*Hf*Wf
  std::array<std::vector<double>, 3> size; // log extents per axis (x,y,z)
};

inline HeadFields head_fields_from_batch(const HeadOut& out, int n = 0) {
  HeadFields f;
  f.D = out.heatmap.dim(2);
  f.Hf = out.heatmap.dim(3);
  f.Wf = out.heatmap.dim(4);
  const std::size_t vol = static_cast<std::size_t>(f.D) * f.Hf * f.Wf;
  f.heatmap.assign(out.heatmap.v.begin() + vol * n,
                   out.heatmap.v.begin() + vol * (n + 1));
  const std::size_t sbase = static_cast<std::size_t>(n) * 3 * vol;
  for (int axis = 0; axis < 3; ++axis)
    f.size[static_cast<std::size_t>(axis)].assign(
        out.size.v.begin() + sbase + vol * axis,
        out.size.v.begin() + sbase + vol * (axis + 1));
  return f;
}

/// Peak decoding: strict local maxima over 3x3x3 neighbourhoods (ties go to
/// the lowest linear index), top k_max peaks with value >= score_min. Each
/// peak becomes a box centered on the peak cell, extents from exp(size).
inline std::vector<Detection> decode(const HeadFields& f, int k_max = 20,
                                     double score_min = 0.05,
                                     int stride = kHeadStride) {
  struct Peak {
    double score;
    std::size_t idx;
    int z, y, x;
  };
  std::vector<Peak> peaks;
  const int D = f.D, H = f.Hf, W = f.Wf;
  auto at = [&](int z, int y, int x) {
    return f.heatmap[(static_cast<std::size_t>(z) * H + y) * W + x];
  };
  for (int z = 0; z < D; ++z)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double v = at(z, y, x);
        if (v < score_min) continue;
        const std::size_t idx = (static_cast<std::size_t>(z) * H + y) * W + x;
        bool is_peak = true;
        for (int dz = -1; dz <= 1 && is_peak; ++dz)
          for (int dy = -1; dy <= 1 && is_peak; ++dy)
            for (int dx = -1; dx <= 1 && is_peak; ++dx) {
              if (dz == 0 && dy == 0 && dx == 0) continue;
              int qz = z + dz, qy = y + dy, qx = x + dx;
              if (qz < 0 || qz >= D || qy < 0 || qy >= H || qx < 0 || qx >= W)
                continue;
              double q = at(qz, qy, qx);
              std::size_t qidx = (static_cast<std::size_t>(qz) * H + qy) * W + qx;
              if (q > v || (q == v && qidx < idx)) is_peak = false;
            }
        if (is_peak) peaks.push_back({v, idx, z, y, x});
      }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.idx < b.idx;
  });
  if (static_cast<int>(peaks.size()) > k_max) peaks.resize(static_cast<std::size_t>(k_max));

  std::vector<Detection> out;
  for (const Peak& p : peaks) {
    const double cx = (p.x + 0.5) * stride;
    const double cy = (p.y + 0.5) * stride;
    const double cz = p.z + 0.5;
    const double ex = std::exp(f.size[0][p.idx]);
    const double ey = std::exp(f.size[1][p.idx]);
    const double ez = std::exp(f.size[2][p.idx]);
    Detection d;
    d.box = {cx - ex / 2, cy - ey / 2, cz - ez / 2,
             cx + ex / 2, cy + ey / 2, cz + ez / 2};
    d.score = p.score;
    d.kind = DetKind::Unfiltered;
    out.push_back(d);
  }
  return out;
}

}  // namespace hpvd::net
