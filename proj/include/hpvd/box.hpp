#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "hpvd/error.hpp"

namespace hpvd {

/// Axis-aligned 3D box in voxel coordinates, half-open: a point p belongs to
/// the box iff min <= p < max componentwise.
struct Box3 {
  double x0 = 0, y0 = 0, z0 = 0;
  double x1 = 0, y1 = 0, z1 = 0;

  bool valid() const { return x0 < x1 && y0 < y1 && z0 < z1; }

  std::array<double, 3> center() const {
    return {(x0 + x1) / 2.0, (y0 + y1) / 2.0, (z0 + z1) / 2.0};
  }

  std::array<double, 3> extent() const { return {x1 - x0, y1 - y0, z1 - z0}; }

  bool contains(double x, double y, double z) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1 && z >= z0 && z < z1;
  }

  Box3 translated(double dx, double dy, double dz) const {
    return {x0 + dx, y0 + dy, z0 + dz, x1 + dx, y1 + dy, z1 + dz};
  }

  bool operator==(const Box3&) const = default;
};

/// Axis-aligned half-open box in the axial (x, y) plane.
struct Box2 {
  double x0 = 0, y0 = 0;
  double x1 = 0, y1 = 0;

  bool valid() const { return x0 < x1 && y0 < y1; }
  std::array<double, 2> center() const { return {(x0 + x1) / 2, (y0 + y1) / 2}; }
  bool contains(double x, double y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
  bool operator==(const Box2&) const = default;
};

enum class LesionKind { HCC, TACE };

inline const char* lesion_kind_name(LesionKind k) {
  return k == LesionKind::HCC ? "HCC" : "TACE";
}

inline LesionKind lesion_kind_from_name(const std::string& s) {
  if (s == "HCC") return LesionKind::HCC;
  if (s == "TACE") return LesionKind::TACE;
  fail(ErrorCode::BadArgument, "unknown lesion kind: " + s);
}

/// Detection kind: raw decoded boxes start unfiltered; postprocessing
/// assigns HCC or TACE.
enum class DetKind { HCC, TACE, Unfiltered };

inline const char* det_kind_name(DetKind k) {
  switch (k) {
    case DetKind::HCC: return "HCC";
    case DetKind::TACE: return "TACE";
    case DetKind::Unfiltered: return "unfiltered";
  }
  fail(ErrorCode::BadArgument, "invalid detection kind");
}

inline DetKind det_kind_from_name(const std::string& s) {
  if (s == "HCC") return DetKind::HCC;
  if (s == "TACE") return DetKind::TACE;
  if (s == "unfiltered") return DetKind::Unfiltered;
  fail(ErrorCode::BadArgument, "unknown detection kind: " + s);
}

struct Detection {
  Box3 box;
  double score = 0.0;
  DetKind kind = DetKind::Unfiltered;
};

inline double volume(const Box3& b) {
  return (b.x1 - b.x0) * (b.y1 - b.y0) * (b.z1 - b.z0);
}

inline double area(const Box2& b) { return (b.x1 - b.x0) * (b.y1 - b.y0); }

inline double intersection_volume(const Box3& a, const Box3& b) {
  double dx = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  double dy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  double dz = std::min(a.z1, b.z1) - std::max(a.z0, b.z0);
  if (dx <= 0 || dy <= 0 || dz <= 0) return 0.0;
  return dx * dy * dz;
}

inline double intersection_area(const Box2& a, const Box2& b) {
  double dx = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  double dy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (dx <= 0 || dy <= 0) return 0.0;
  return dx * dy;
}

inline double iou3(const Box3& a, const Box3& b) {
  double inter = intersection_volume(a, b);
  if (inter == 0.0) return 0.0;
  return inter / (volume(a) + volume(b) - inter);
}

/// Intersection over the predicted box volume. Asymmetric: a small predicted
/// box fully inside a large lesion scores 1.
inline double iobb3(const Box3& pred, const Box3& gt) {
  return intersection_volume(pred, gt) / volume(pred);
}

inline double iobb2(const Box2& pred, const Box2& gt) {
  return intersection_area(pred, gt) / area(pred);
}

constexpr double kDefaultIobbTau = 0.3;

/// Lesion flagging criterion: the predicted center must fall inside the
/// ground-truth box (pointing game) and IoBB must reach tau.
inline bool flag_match(const Box3& pred, const Box3& gt,
                       double tau_iobb = kDefaultIobbTau) {
  auto c = pred.center();
  if (!gt.contains(c[0], c[1], c[2])) return false;
  return iobb3(pred, gt) >= tau_iobb;
}

inline Box2 project_axial(const Box3& b) { return {b.x0, b.y0, b.x1, b.y1}; }

/// 2D variant used for reader-style marks: matched against the axial
/// projection of the 3D ground-truth box.
inline bool flag_match_2d(const Box2& pred, const Box3& gt3,
                          double tau = kDefaultIobbTau) {
  Box2 gt = project_axial(gt3);
  auto c = pred.center();
  if (!gt.contains(c[0], c[1])) return false;
  return iobb2(pred, gt) >= tau;
}

}  // namespace hpvd
