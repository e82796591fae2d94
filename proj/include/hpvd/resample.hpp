#pragma once

#include <cmath>

#include "hpvd/volume.hpp"

namespace hpvd {

enum class Interp { Trilinear, Cubic };

namespace detail {

// Keys cubic-convolution kernel with a = -0.5 (order-3 accurate). s >= 0.
inline double keys_weight(double s) {
  constexpr double a = -0.5;
  if (s < 1.0) return ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0;
  if (s < 2.0) return ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a;
  return 0.0;
}

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Resamples one axis of a 3D grid. Axis lengths are given as (n_axis,
// n_other1, n_other2) with strides describing the memory layout, so the same
// routine serves x, y and z passes.
inline void resample_axis(const double* in, double* out, int n_in, int n_out,
                          std::size_t stride_axis_in, std::size_t stride_axis_out,
                          int n_a, std::size_t stride_a_in, std::size_t stride_a_out,
                          int n_b, std::size_t stride_b_in, std::size_t stride_b_out,
                          double scale, Interp mode) {
  const int taps = (mode == Interp::Cubic) ? 4 : 2;
  std::vector<int> idx(static_cast<std::size_t>(n_out) * taps);
  std::vector<double> wgt(static_cast<std::size_t>(n_out) * taps);
  for (int o = 0; o < n_out; ++o) {
    // Voxel-center mapping: output center (o + 0.5) * s_out lands at input
    // coordinate u in voxel-center units.
    double u = (o + 0.5) * scale - 0.5;
    if (mode == Interp::Trilinear) {
      double fl = std::floor(u);
      int i0 = static_cast<int>(fl);
      double t = u - fl;
      idx[o * 2 + 0] = clamp_index(i0, n_in);
      idx[o * 2 + 1] = clamp_index(i0 + 1, n_in);
      wgt[o * 2 + 0] = 1.0 - t;
      wgt[o * 2 + 1] = t;
    } else {
      double fl = std::floor(u);
      int i0 = static_cast<int>(fl);
      for (int k = 0; k < 4; ++k) {
        int i = i0 - 1 + k;
        idx[o * 4 + k] = clamp_index(i, n_in);
        wgt[o * 4 + k] = keys_weight(std::abs(u - i));
      }
    }
  }
  for (int a = 0; a < n_a; ++a) {
    for (int b = 0; b < n_b; ++b) {
      const double* src = in + a * stride_a_in + b * stride_b_in;
      double* dst = out + a * stride_a_out + b * stride_b_out;
      for (int o = 0; o < n_out; ++o) {
        double acc = 0.0;
        for (int k = 0; k < taps; ++k)
          acc += wgt[o * taps + k] * src[idx[o * taps + k] * stride_axis_in];
        dst[o * stride_axis_out] = acc;
      }
    }
  }
}

}  // namespace detail

/// Resamples to the target spacing with separable interpolation (x, then y,
/// then z). Out-of-range samples clamp to the nearest edge voxel. Output
/// dims follow round(dims * spacing / target).
inline Volume resample(const Volume& v, std::array<double, 3> target_spacing,
                       Interp mode = Interp::Cubic) {
  require(target_spacing[0] > 0 && target_spacing[1] > 0 && target_spacing[2] > 0,
          ErrorCode::BadArgument, "target spacing must be positive");
  auto out_dim = [](int n, double s_in, double s_out) {
    int d = static_cast<int>(std::lround(n * s_in / s_out));
    return d < 1 ? 1 : d;
  };
  const int mx = out_dim(v.nx, v.spacing_mm[0], target_spacing[0]);
  const int my = out_dim(v.ny, v.spacing_mm[1], target_spacing[1]);
  const int mz = out_dim(v.nz, v.spacing_mm[2], target_spacing[2]);

  // x pass
  Volume vx(mx, v.ny, v.nz, v.spacing_mm, v.phase);
  detail::resample_axis(v.data.data(), vx.data.data(), v.nx, mx,
                        1, 1,
                        v.ny, static_cast<std::size_t>(v.nx), static_cast<std::size_t>(mx),
                        v.nz, static_cast<std::size_t>(v.nx) * v.ny,
                        static_cast<std::size_t>(mx) * v.ny,
                        target_spacing[0] / v.spacing_mm[0], mode);
  // y pass
  Volume vy(mx, my, v.nz, v.spacing_mm, v.phase);
  detail::resample_axis(vx.data.data(), vy.data.data(), v.ny, my,
                        static_cast<std::size_t>(mx), static_cast<std::size_t>(mx),
                        mx, 1, 1,
                        v.nz, static_cast<std::size_t>(mx) * v.ny,
                        static_cast<std::size_t>(mx) * my,
                        target_spacing[1] / v.spacing_mm[1], mode);
  // z pass
  Volume out(mx, my, mz, target_spacing, v.phase);
  detail::resample_axis(vy.data.data(), out.data.data(), v.nz, mz,
                        static_cast<std::size_t>(mx) * my, static_cast<std::size_t>(mx) * my,
                        mx, 1, 1,
                        my, static_cast<std::size_t>(mx), static_cast<std::size_t>(mx),
                        target_spacing[2] / v.spacing_mm[2], mode);
  return out;
}

}  // namespace hpvd
