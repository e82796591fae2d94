#pragma once

#include <cstdint>
#include <vector>

#include "hpvd/rng.hpp"
#include "hpvd/volume.hpp"

namespace hpvd {

/// Half-open depth range [z0, z1).
struct DepthRange {
  int z0 = 0;
  int z1 = 0;
  int length() const { return z1 - z0; }
  bool operator==(const DepthRange&) const = default;
};

/// Depth windows covering [0, nz). Consecutive windows overlap by exactly
/// overlap_depth except the last, which is shifted back so it ends at nz.
/// A volume shallower than the window yields one full-volume range.
inline std::vector<DepthRange> sliding_windows(int nz, int window_depth,
                                               int overlap_depth) {
  require(window_depth > 0 && overlap_depth >= 0, ErrorCode::BadArgument,
          "window and overlap must be non-negative, window positive");
  require(overlap_depth < window_depth, ErrorCode::BadArgument,
          "overlap must be smaller than the window depth");
  require(nz > 0, ErrorCode::BadArgument, "nz must be positive");
  std::vector<DepthRange> out;
  if (nz <= window_depth) {
    out.push_back({0, nz});
    return out;
  }
  int step = window_depth - overlap_depth;
  int s = 0;
  while (s + window_depth < nz) {
    out.push_back({s, s + window_depth});
    s += step;
  }
  out.push_back({nz - window_depth, nz});
  return out;
}

/// Scalar field over one depth window, shaped like the source grid in x/y.
struct WindowField {
  DepthRange range;
  int nx = 0, ny = 0;
  std::vector<double> data;  // (range.length() * ny * nx), x fastest
};

/// Recombines depth-window outputs into a full-depth field. Voxels covered
/// by one window are copied; voxels in overlaps take the arithmetic mean of
/// all contributing windows.
inline std::vector<double> stitch(const std::vector<WindowField>& windows,
                                  int nx, int ny, int nz) {
  require(!windows.empty(), ErrorCode::BadArgument, "stitch needs >= 1 window");
  std::vector<double> sum(static_cast<std::size_t>(nx) * ny * nz, 0.0);
  std::vector<std::uint32_t> cnt(sum.size(), 0);
  const std::size_t plane = static_cast<std::size_t>(nx) * ny;
  for (const auto& w : windows) {
    require(w.nx == nx && w.ny == ny, ErrorCode::DimsMismatch,
            "window field in-plane dims mismatch");
    require(w.range.z0 >= 0 && w.range.z1 <= nz && w.range.z0 < w.range.z1,
            ErrorCode::BadArgument, "window range outside field");
    require(w.data.size() == plane * static_cast<std::size_t>(w.range.length()),
            ErrorCode::DimsMismatch, "window field data length mismatch");
    for (int z = w.range.z0; z < w.range.z1; ++z) {
      const double* src = w.data.data() + plane * (z - w.range.z0);
      double* dst = sum.data() + plane * z;
      std::uint32_t* c = cnt.data() + plane * z;
      for (std::size_t i = 0; i < plane; ++i) {
        dst[i] += src[i];
        c[i] += 1;
      }
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    require(cnt[i] > 0, ErrorCode::BadArgument, "stitch windows leave gaps");
    sum[i] /= cnt[i];
  }
  return sum;
}

/// Output of crop_random: identical window applied to every present phase,
/// annotations translated into window coordinates and clipped.
struct StudyCrop {
  std::array<int, 3> offset = {0, 0, 0};
  std::array<int, 3> size = {0, 0, 0};
  std::map<Phase, Volume> volumes;
  std::vector<LesionAnnotation> lesions;
};

namespace detail {

inline Volume crop_volume(const Volume& v, std::array<int, 3> off,
                          std::array<int, 3> size) {
  Volume out(size[0], size[1], size[2], v.spacing_mm, v.phase);
  for (int z = 0; z < size[2]; ++z)
    for (int y = 0; y < size[1]; ++y) {
      const double* src = &v.data[v.index(off[0], off[1] + y, off[2] + z)];
      double* dst = &out.data[out.index(0, y, z)];
      std::copy(src, src + size[0], dst);
    }
  return out;
}

}  // namespace detail

/// Deterministic random crop: a pure function of (study, size, seed).
/// Lesion boxes are shifted into window coordinates and clipped; boxes left
/// without extent are dropped.
inline StudyCrop crop_random(const Study& s, std::array<int, 3> size,
                             std::uint64_t seed) {
  const Volume& ref = s.any_volume();
  require(size[0] > 0 && size[1] > 0 && size[2] > 0, ErrorCode::BadArgument,
          "crop size must be positive");
  require(size[0] <= ref.nx && size[1] <= ref.ny && size[2] <= ref.nz,
          ErrorCode::BadArgument, "crop larger than volume");
  Rng rng(seed);
  StudyCrop crop;
  crop.size = size;
  crop.offset = {
      static_cast<int>(rng.uniform_int(0, ref.nx - size[0])),
      static_cast<int>(rng.uniform_int(0, ref.ny - size[1])),
      static_cast<int>(rng.uniform_int(0, ref.nz - size[2]))};
  for (const auto& [p, v] : s.volumes)
    crop.volumes.emplace(p, detail::crop_volume(v, crop.offset, size));
  for (const auto& l : s.lesions) {
    Box3 b = l.box.translated(-crop.offset[0], -crop.offset[1], -crop.offset[2]);
    b.x0 = std::max(b.x0, 0.0);
    b.y0 = std::max(b.y0, 0.0);
    b.z0 = std::max(b.z0, 0.0);
    b.x1 = std::min(b.x1, static_cast<double>(size[0]));
    b.y1 = std::min(b.y1, static_cast<double>(size[1]));
    b.z1 = std::min(b.z1, static_cast<double>(size[2]));
    if (b.valid()) crop.lesions.push_back({b, l.kind});
  }
  return crop;
}

}  // namespace hpvd
