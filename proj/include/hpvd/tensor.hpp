#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "hpvd/error.hpp"

namespace hpvd {

/// Dense row-major tensor of doubles (last axis fastest). All network math
/// runs in double so analytic gradients can be checked against finite
/// differences at tight tolerance.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), 0.0);
  }

  Tensor(std::vector<int> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    require(v.size() == numel_of(shape), ErrorCode::BadArgument,
            "tensor data length does not match shape");
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      require(d > 0, ErrorCode::BadArgument, "tensor dims must be positive");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t numel() const { return v.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void zero() { std::fill(v.begin(), v.end(), 0.0); }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline void accumulate(Tensor& dst, const Tensor& src) {
  require(dst.same_shape(src), ErrorCode::BadArgument, "accumulate shape mismatch");
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace hpvd
