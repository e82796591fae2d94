#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "hpvd/rng.hpp"
#include "hpvd/volume.hpp"
#include "hpvd/volume_io.hpp"

namespace hpvd {
namespace phantom {

/// Synthetic multi-phase study generator. HU values are synthesis choices
/// tuned for a readable toy problem; the one hard constraint is that TACE
/// lesions must exceed 200 HU over more than 1% of their box so the treated
/// -lesion classifier fires by construction.
struct PhantomConfig {
  std::array<int, 3> dims = {64, 64, 32};
  std::array<double, 3> spacing_mm = {1.0, 1.0, 5.0};

  std::array<double, 3> liver_center = {32.0, 32.0, 16.0};  // voxel units
  std::array<double, 3> liver_axes = {24.0, 20.0, 12.0};

  double background_hu = 20.0;
  // parenchyma per phase NC, AP, VP, DP
  std::array<double, 4> parenchyma_hu = {55.0, 70.0, 100.0, 90.0};
  // untreated HCC: wash-in on AP, wash-out on VP/DP, slightly hypodense NC
  std::array<double, 4> hcc_delta_hu = {-10.0, 40.0, -25.0, -25.0};
  double tace_hu = 350.0;  // uniform across phases (retained lipiodol)

  std::array<double, 2> radius_xy = {3.5, 7.0};  // lesion semi-axes, voxels
  std::array<double, 2> radius_z = {1.8, 3.5};
  int max_hcc_per_target = 2;
  double tace_in_target_prob = 0.25;
  double tace_only_control_frac = 0.25;

  int n_speckles = 2;        // isolated calcification-like distractors
  double speckle_hu = 300.0;
  double noise_sigma = 5.0;
  PhaseSet phases = PhaseSet::from_mask(15);

  void check() const {
    require(tace_hu > 200.0, ErrorCode::BadArgument,
            "TACE HU must exceed the 200 HU classifier threshold");
    require(radius_xy[0] > 0 && radius_xy[0] <= radius_xy[1] && radius_z[0] > 0 &&
                radius_z[0] <= radius_z[1],
            ErrorCode::BadArgument, "lesion radius ranges must be positive");
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrorCode::BadArgument,
            "phantom dims must be positive");
    require(noise_sigma >= 0, ErrorCode::BadArgument, "noise sigma must be >= 0");
  }
};

namespace detail {

struct Lesion {
  std::array<double, 3> center;  // voxel units (continuous)
  std::array<double, 3> radii;
  LesionKind kind;
  Box3 box;  // tight integer bbox of the rendered support, half-open
};

inline double ellipsoid_rho(const std::array<double, 3>& p,
                            const std::array<double, 3>& c,
                            const std::array<double, 3>& r) {
  const double dx = (p[0] - c[0]) / r[0];
  const double dy = (p[1] - c[1]) / r[1];
  const double dz = (p[2] - c[2]) / r[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Soft-edge weight: 1 inside the ellipsoid, then a linear 1-voxel ramp
/// measured along the ray from the center (the exact distance to the
/// surface along that ray), 0 beyond.
inline double lesion_weight(const std::array<double, 3>& p,
                            const std::array<double, 3>& c,
                            const std::array<double, 3>& r) {
  const double rho = ellipsoid_rho(p, c, r);
  if (rho <= 1.0) return 1.0;
  const double dx = p[0] - c[0], dy = p[1] - c[1], dz = p[2] - c[2];
  const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
  const double e = dist * (1.0 - 1.0 / rho);
  return e >= 1.0 ? 0.0 : 1.0 - e;
}

inline bool boxes_apart(const Box3& a, const Box3& b, double margin) {
  return a.x1 + margin <= b.x0 || b.x1 + margin <= a.x0 ||
         a.y1 + margin <= b.y0 || b.y1 + margin <= a.y0 ||
         a.z1 + margin <= b.z0 || b.z1 + margin <= a.z0;
}

inline Lesion place_lesion(const PhantomConfig& cfg, LesionKind kind, Rng& rng,
                           const std::vector<Lesion>& existing) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    Lesion l;
    l.kind = kind;
    l.radii = {rng.uniform(cfg.radius_xy[0], cfg.radius_xy[1]),
               rng.uniform(cfg.radius_xy[0], cfg.radius_xy[1]),
               rng.uniform(cfg.radius_z[0], cfg.radius_z[1])};
    // center must keep lesion + ramp inside the liver ellipsoid
    std::array<double, 3> room;
    bool fits = true;
    for (int a = 0; a < 3; ++a) {
      room[a] = cfg.liver_axes[a] - (l.radii[a] + 2.0);
      if (room[a] <= 0) fits = false;
    }
    if (!fits) continue;
    for (int a = 0; a < 3; ++a)
      l.center[a] = cfg.liver_center[a] + room[a] * (2.0 * rng.uniform() - 1.0);
    if (ellipsoid_rho(l.center, cfg.liver_center, room) > 1.0) continue;

    const double rho_edge = 1.0 + 1.0 / std::min({l.radii[0], l.radii[1], l.radii[2]});
    Box3 support{l.center[0] - l.radii[0] * rho_edge, l.center[1] - l.radii[1] * rho_edge,
                 l.center[2] - l.radii[2] * rho_edge, l.center[0] + l.radii[0] * rho_edge,
                 l.center[1] + l.radii[1] * rho_edge, l.center[2] + l.radii[2] * rho_edge};
    bool clash = false;
    for (const Lesion& e : existing)
      if (!boxes_apart(support, e.box, 2.0)) {
        clash = true;
        break;
      }
    if (clash) continue;
    l.box = support;  // provisional; tightened after rendering
    return l;
  }
  fail(ErrorCode::BadArgument,
       "lesion placement failed after bounded retries (overcrowded config)");
}

}  // namespace detail

/// Deterministic synthetic study: liver ellipsoid on a soft background,
/// soft-edged ellipsoidal lesions, exact liver mask, integer HU values.
inline Study generate_study(const PhantomConfig& cfg, std::uint64_t seed,
                            const std::string& id, int n_hcc, int n_tace) {
  cfg.check();
  Rng rng(seed);
  const int nx = cfg.dims[0], ny = cfg.dims[1], nz = cfg.dims[2];

  std::vector<detail::Lesion> lesions;
  for (int i = 0; i < n_hcc; ++i)
    lesions.push_back(detail::place_lesion(cfg, LesionKind::HCC, rng, lesions));
  for (int i = 0; i < n_tace; ++i)
    lesions.push_back(detail::place_lesion(cfg, LesionKind::TACE, rng, lesions));

  // Distractor speckles: isolated hyperdense voxels inside the liver but
  // outside every lesion support box.
  std::vector<std::array<int, 3>> speckles;
  for (int i = 0; i < cfg.n_speckles; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::array<int, 3> p = {static_cast<int>(rng.uniform_int(0, nx - 1)),
                              static_cast<int>(rng.uniform_int(0, ny - 1)),
                              static_cast<int>(rng.uniform_int(0, nz - 1))};
      std::array<double, 3> c = {p[0] + 0.5, p[1] + 0.5, p[2] + 0.5};
      if (detail::ellipsoid_rho(c, cfg.liver_center, cfg.liver_axes) > 0.9) continue;
      bool clash = false;
      for (const auto& l : lesions)
        if (l.box.contains(c[0], c[1], c[2])) clash = true;
      for (const auto& sp : speckles)
        if (std::abs(sp[0] - p[0]) < 10 && std::abs(sp[1] - p[1]) < 10 &&
            std::abs(sp[2] - p[2]) < 4)
          clash = true;
      if (clash) continue;
      speckles.push_back(p);
      break;
    }
  }

  Study study;
  study.id = id;

  // Liver mask by the voxel-center rule.
  Mask mask(nx, ny, nz);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        std::array<double, 3> p = {x + 0.5, y + 0.5, z + 0.5};
        mask.at(x, y, z) =
            detail::ellipsoid_rho(p, cfg.liver_center, cfg.liver_axes) <= 1.0 ? 1 : 0;
      }
  study.liver_mask = std::move(mask);

  // Render each requested phase; tighten lesion boxes on the first phase.
  bool boxes_final = false;
  for (Phase ph : cfg.phases.phases()) {
    const auto pi = static_cast<std::size_t>(phase_index(ph));
    Volume v(nx, ny, nz, cfg.spacing_mm, ph);
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
          v.at(x, y, z) = study.liver_mask->at(x, y, z) ? cfg.parenchyma_hu[pi]
                                                        : cfg.background_hu;
    for (auto& l : lesions) {
      const double rho_edge =
          1.0 + 1.0 / std::min({l.radii[0], l.radii[1], l.radii[2]});
      const double target_hu = l.kind == LesionKind::TACE
                                   ? cfg.tace_hu
                                   : cfg.parenchyma_hu[pi] + cfg.hcc_delta_hu[pi];
      int x0 = std::max(0, static_cast<int>(std::floor(l.center[0] - l.radii[0] * rho_edge - 1)));
      int x1 = std::min(nx, static_cast<int>(std::ceil(l.center[0] + l.radii[0] * rho_edge + 1)));
      int y0 = std::max(0, static_cast<int>(std::floor(l.center[1] - l.radii[1] * rho_edge - 1)));
      int y1 = std::min(ny, static_cast<int>(std::ceil(l.center[1] + l.radii[1] * rho_edge + 1)));
      int z0 = std::max(0, static_cast<int>(std::floor(l.center[2] - l.radii[2] * rho_edge - 1)));
      int z1 = std::min(nz, static_cast<int>(std::ceil(l.center[2] + l.radii[2] * rho_edge + 1)));
      int bx0 = nx, bx1 = -1, by0 = ny, by1 = -1, bz0 = nz, bz1 = -1;
      for (int z = z0; z < z1; ++z)
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            std::array<double, 3> p = {x + 0.5, y + 0.5, z + 0.5};
            double w = detail::lesion_weight(
                detail::ellipsoid_rho(p, l.center, l.radii), rho_edge);
            if (w <= 0.0) continue;
            double& hu = v.at(x, y, z);
            hu = hu + w * (target_hu - hu);
            bx0 = std::min(bx0, x); bx1 = std::max(bx1, x);
            by0 = std::min(by0, y); by1 = std::max(by1, y);
            bz0 = std::min(bz0, z); bz1 = std::max(bz1, z);
          }
      if (!boxes_final) {
        require(bx1 >= bx0 && by1 >= by0 && bz1 >= bz0, ErrorCode::BadArgument,
                "lesion rendered empty");
        l.box = {static_cast<double>(bx0), static_cast<double>(by0),
                 static_cast<double>(bz0), static_cast<double>(bx1 + 1),
                 static_cast<double>(by1 + 1), static_cast<double>(bz1 + 1)};
      }
    }
    boxes_final = true;
    for (const auto& sp : speckles) v.at(sp[0], sp[1], sp[2]) = cfg.speckle_hu;
    if (cfg.noise_sigma > 0)
      for (double& hu : v.data) hu += rng.normal(0.0, cfg.noise_sigma);
    for (double& hu : v.data) hu = std::nearbyint(hu);
    study.volumes.emplace(ph, std::move(v));
  }

  // TACE boxes must trip the >200 HU / 1% rule in every phase by construction.
  for (const auto& l : lesions) {
    if (l.kind != LesionKind::TACE) continue;
    for (const auto& [ph, v] : study.volumes) {
      std::int64_t hot = 0, total = 0;
      for (int z = static_cast<int>(l.box.z0); z < static_cast<int>(l.box.z1); ++z)
        for (int y = static_cast<int>(l.box.y0); y < static_cast<int>(l.box.y1); ++y)
          for (int x = static_cast<int>(l.box.x0); x < static_cast<int>(l.box.x1); ++x) {
            ++total;
            if (v.at(x, y, z) > 200.0) ++hot;
          }
      require(total > 0 && static_cast<double>(hot) / total > 0.01,
              ErrorCode::BadArgument,
              "generated TACE lesion does not satisfy the classifier rule");
    }
  }

  for (const auto& l : lesions) study.lesions.push_back({l.box, l.kind});
  study.check_invariants();
  return study;
}

struct GeneratedDataset {
  std::vector<Study> studies;  // targets first, then controls
};

/// Target studies carry >= 1 HCC lesion (sometimes plus a treated one);
/// controls carry none (a configurable fraction are TACE-only).
inline GeneratedDataset generate_dataset(const PhantomConfig& cfg, int n_target,
                                         int n_control, std::uint64_t seed,
                                         const std::string& prefix) {
  require(n_target >= 0 && n_control >= 0, ErrorCode::BadArgument,
          "study counts must be >= 0");
  GeneratedDataset ds;
  Rng master(seed);
  char name[64];
  for (int i = 0; i < n_target; ++i) {
    Rng child = master.fork(static_cast<std::uint64_t>(i));
    int n_hcc = 1 + static_cast<int>(child.uniform_int(0, cfg.max_hcc_per_target - 1));
    int n_tace = child.uniform() < cfg.tace_in_target_prob ? 1 : 0;
    std::snprintf(name, sizeof name, "%s_t%03d", prefix.c_str(), i);
    ds.studies.push_back(generate_study(cfg, child.next_u64(), name, n_hcc, n_tace));
  }
  for (int i = 0; i < n_control; ++i) {
    Rng child = master.fork(static_cast<std::uint64_t>(n_target + i));
    int n_tace = child.uniform() < cfg.tace_only_control_frac ? 1 : 0;
    std::snprintf(name, sizeof name, "%s_c%03d", prefix.c_str(), i);
    ds.studies.push_back(generate_study(cfg, child.next_u64(), name, 0, n_tace));
  }
  return ds;
}

/// Writes every study under dir/studies/<id>/ and the split index JSON.
inline DatasetIndex save_dataset(const GeneratedDataset& ds,
                                 const std::filesystem::path& dir) {
  DatasetIndex idx;
  for (const Study& s : ds.studies) {
    const std::string rel = "studies/" + s.id;
    save_study(s, dir / rel);
    bool is_target = false;
    for (const auto& l : s.lesions)
      if (l.kind == LesionKind::HCC) is_target = true;
    idx.studies.push_back({s.id, rel, is_target});
  }
  save_dataset_index(idx, dir / "index.json");
  return idx;
}

}  // namespace phantom
}  // namespace hpvd
