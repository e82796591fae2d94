#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hpvd/box.hpp"
#include "hpvd/error.hpp"
#include "hpvd/phase.hpp"

namespace hpvd {

/// 3D grid of HU (or normalized) values with voxel spacing and a phase tag.
/// Data is row-major with x fastest: index = (z * ny + y) * nx + x.
struct Volume {
  int nx = 0, ny = 0, nz = 0;
  std::array<double, 3> spacing_mm = {1.0, 1.0, 1.0};
  Phase phase = Phase::NC;
  std::vector<double> data;

  Volume() = default;

  Volume(int nx_, int ny_, int nz_, std::array<double, 3> spacing, Phase p)
      : nx(nx_), ny(ny_), nz(nz_), spacing_mm(spacing), phase(p) {
    require(nx > 0 && ny > 0 && nz > 0, ErrorCode::BadArgument,
            "volume dims must be positive");
    require(spacing_mm[0] > 0 && spacing_mm[1] > 0 && spacing_mm[2] > 0,
            ErrorCode::BadArgument, "voxel spacing must be positive");
    data.assign(numel(), 0.0);
  }

  std::size_t numel() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }

  double& at(int x, int y, int z) { return data[index(x, y, z)]; }
  double at(int x, int y, int z) const { return data[index(x, y, z)]; }

  bool same_grid(const Volume& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz && spacing_mm == o.spacing_mm;
  }

  void check_invariants() const {
    require(data.size() == numel(), ErrorCode::BadArgument,
            "volume data length does not match dims");
    for (double hu : data)
      require(std::isfinite(hu), ErrorCode::NumericDivergence,
              "volume contains non-finite values");
  }
};

/// Binary grid on the same voxel lattice as the study volumes.
struct Mask {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int nx_, int ny_, int nz_) : nx(nx_), ny(ny_), nz(nz_) {
    data.assign(static_cast<std::size_t>(nx) * ny * nz, 0);
  }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  std::uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
  std::uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
};

struct LesionAnnotation {
  Box3 box;  // voxel coordinates on the shared grid
  LesionKind kind = LesionKind::HCC;
};

/// A registered multi-phase study: all present volumes share one voxel grid.
struct Study {
  std::string id;
  std::map<Phase, Volume> volumes;
  std::optional<Mask> liver_mask;
  std::vector<LesionAnnotation> lesions;

  const Volume& any_volume() const {
    require(!volumes.empty(), ErrorCode::BadArgument, "study has no phases");
    return volumes.begin()->second;
  }

  PhaseSet phases() const {
    PhaseSet s;
    for (const auto& [p, v] : volumes) s.mask |= 1u << phase_index(p);
    require(s.mask != 0, ErrorCode::BadArgument, "study has no phases");
    return s;
  }

  void check_invariants() const {
    require(!volumes.empty(), ErrorCode::BadArgument,
            "study must contain at least one phase");
    const Volume& ref = any_volume();
    for (const auto& [p, v] : volumes) {
      require(v.phase == p, ErrorCode::BadArgument, "phase tag mismatch");
      require(v.same_grid(ref), ErrorCode::DimsMismatch,
              "study volumes must share dims and spacing");
      v.check_invariants();
    }
    if (liver_mask) {
      require(liver_mask->nx == ref.nx && liver_mask->ny == ref.ny &&
                  liver_mask->nz == ref.nz,
              ErrorCode::DimsMismatch, "liver mask dims must match volumes");
    }
    for (const auto& l : lesions) {
      require(l.box.valid(), ErrorCode::BadArgument, "lesion box has no extent");
      require(l.box.x0 >= 0 && l.box.y0 >= 0 && l.box.z0 >= 0 &&
                  l.box.x1 <= ref.nx && l.box.y1 <= ref.ny && l.box.z1 <= ref.nz,
              ErrorCode::BadArgument, "lesion box outside volume bounds");
    }
  }
};

/// Per-phase HU mean and standard deviation, estimated on the training split.
struct PhaseStats {
  struct Entry {
    double mean = 0.0;
    double stddev = 1.0;
  };
  std::array<std::optional<Entry>, kNumPhases> entries;

  void set(Phase p, double mean, double stddev) {
    require(stddev > 0, ErrorCode::BadArgument, "phase stddev must be positive");
    entries[static_cast<std::size_t>(phase_index(p))] = Entry{mean, stddev};
  }

  const Entry& get(Phase p) const {
    const auto& e = entries[static_cast<std::size_t>(phase_index(p))];
    require(e.has_value(), ErrorCode::MissingPhase,
            std::string("no normalization stats for phase ") + phase_name(p));
    return *e;
  }

  bool has(Phase p) const {
    return entries[static_cast<std::size_t>(phase_index(p))].has_value();
  }
};

/// (in - mean_phase) / std_phase, elementwise.
inline Volume normalize(const Volume& v, const PhaseStats& stats) {
  const auto& e = stats.get(v.phase);
  Volume out = v;
  for (double& x : out.data) x = (x - e.mean) / e.stddev;
  return out;
}

inline Volume denormalize(const Volume& v, const PhaseStats& stats) {
  const auto& e = stats.get(v.phase);
  Volume out = v;
  for (double& x : out.data) x = x * e.stddev + e.mean;
  return out;
}

}  // namespace hpvd
