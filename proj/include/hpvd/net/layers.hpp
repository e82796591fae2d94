#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hpvd/phase.hpp"
#include "hpvd/tensor.hpp"

namespace hpvd::net {

// ---------------------------------------------------------------------------
// Axial-coronal-sagittal pseudo-3D convolution.
//
// Output channels are partitioned into three groups; each group applies 2D
// kernels over one orthogonal plane (axial = H,W; coronal = D,W;
// sagittal = D,H), slice-wise along the remaining axis. Zero padding keeps
// "same" geometry; stride applies in-plane (H and W) only — depth is never
// strided. Weights are stored [Cout, Cin, ka, kb] where (ka, kb) are the
// group's plane axes.
// ---------------------------------------------------------------------------

struct ConvParams {
  Tensor w;  // [Cout, Cin, k, k]
  Tensor b;  // [Cout]
  int k = 3;
  int stride = 1;

  int cout() const { return w.dim(0); }
  int cin() const { return w.dim(1); }
};

inline ConvParams make_conv(int cout, int cin, int k, int stride) {
  ConvParams p;
  p.w = Tensor({cout, cin, k, k});
  p.b = Tensor({cout});
  p.k = k;
  p.stride = stride;
  return p;
}

enum class ConvPlane { Axial, Coronal, Sagittal };

/// Channels split as evenly as possible into thirds; the remainder goes to
/// the axial group.
inline ConvPlane conv_plane_of(int co, int cout) {
  int third = cout / 3;
  int axial = third + cout % 3;
  if (co < axial) return ConvPlane::Axial;
  if (co < axial + third) return ConvPlane::Coronal;
  return ConvPlane::Sagittal;
}

namespace detail {

struct WRange {
  int lo = 0, hi = -1;  // inclusive output-w range for one kernel offset
};

// Valid output positions along a strided axis for kernel offset kk:
// 0 <= s*o + kk - p < n_in.
inline WRange valid_range(int n_in, int n_out, int s, int p, int kk) {
  WRange r;
  int num = p - kk;
  r.lo = num <= 0 ? 0 : (num + s - 1) / s;
  int top = n_in - 1 - kk + p;
  r.hi = top < 0 ? -1 : std::min(n_out - 1, top / s);
  return r;
}

}  // namespace detail

inline void conv_out_dims(const Tensor& x, const ConvParams& p, int& n, int& d,
                          int& ho, int& wo) {
  require(x.shape.size() == 5, ErrorCode::BadArgument, "conv expects 5D input");
  require(x.dim(1) == p.cin(), ErrorCode::BadArgument,
          "conv input channel mismatch");
  n = x.dim(0);
  d = x.dim(2);
  const int s = p.stride;
  require(x.dim(3) % s == 0 && x.dim(4) % s == 0, ErrorCode::BadArgument,
          "conv input H/W must be divisible by the stride");
  ho = x.dim(3) / s;
  wo = x.dim(4) / s;
}

inline Tensor acs_conv_forward(const Tensor& x, const ConvParams& p) {
  int N, D, Ho, Wo;
  conv_out_dims(x, p, N, D, Ho, Wo);
  const int Ci = p.cin(), Co = p.cout(), k = p.k, s = p.stride, pad = p.k / 2;
  const int H = x.dim(3), W = x.dim(4);
  Tensor out({N, Co, D, Ho, Wo});

  const std::size_t xs_c = static_cast<std::size_t>(D) * H * W;
  const std::size_t xs_n = xs_c * Ci;
  const std::size_t os_c = static_cast<std::size_t>(D) * Ho * Wo;
  const std::size_t os_n = os_c * Co;

  std::array<detail::WRange, 3> wr;
  for (int kw = 0; kw < k; ++kw) wr[kw] = detail::valid_range(W, Wo, s, pad, kw);

  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      const ConvPlane plane = conv_plane_of(co, Co);
      const double* wp = p.w.data() + static_cast<std::size_t>(co) * Ci * k * k;
      const double bias = p.b.v[co];
      for (int d = 0; d < D; ++d) {
        for (int ho = 0; ho < Ho; ++ho) {
          double* row =
              out.data() + os_n * n + os_c * co +
              (static_cast<std::size_t>(d) * Ho + ho) * Wo;
          for (int w = 0; w < Wo; ++w) row[w] = bias;
          for (int ci = 0; ci < Ci; ++ci) {
            const double* xc = x.data() + xs_n * n + xs_c * ci;
            const double* wk = wp + static_cast<std::size_t>(ci) * k * k;
            if (plane == ConvPlane::Axial) {
              for (int kh = 0; kh < k; ++kh) {
                int ih = s * ho + kh - pad;
                if (ih < 0 || ih >= H) continue;
                const double* xrow =
                    xc + (static_cast<std::size_t>(d) * H + ih) * W;
                for (int kw = 0; kw < k; ++kw) {
                  double c = wk[kh * k + kw];
                  const int off = kw - pad;
                  for (int w = wr[kw].lo; w <= wr[kw].hi; ++w)
                    row[w] += c * xrow[s * w + off];
                }
              }
            } else if (plane == ConvPlane::Coronal) {
              for (int kd = 0; kd < k; ++kd) {
                int id = d + kd - pad;
                if (id < 0 || id >= D) continue;
                const double* xrow =
                    xc + (static_cast<std::size_t>(id) * H + s * ho) * W;
                for (int kw = 0; kw < k; ++kw) {
                  double c = wk[kd * k + kw];
                  const int off = kw - pad;
                  for (int w = wr[kw].lo; w <= wr[kw].hi; ++w)
                    row[w] += c * xrow[s * w + off];
                }
              }
            } else {
              for (int kd = 0; kd < k; ++kd) {
                int id = d + kd - pad;
                if (id < 0 || id >= D) continue;
                for (int kh = 0; kh < k; ++kh) {
                  int ih = s * ho + kh - pad;
                  if (ih < 0 || ih >= H) continue;
                  const double* xrow =
                      xc + (static_cast<std::size_t>(id) * H + ih) * W;
                  double c = wk[kd * k + kh];
                  for (int w = 0; w < Wo; ++w) row[w] += c * xrow[s * w];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// Accumulates dw/db into grads and returns dL/dx.
inline Tensor acs_conv_backward(const Tensor& x, const ConvParams& p,
                                const Tensor& gout, ConvParams& grads) {
  int N, D, Ho, Wo;
  conv_out_dims(x, p, N, D, Ho, Wo);
  const int Ci = p.cin(), Co = p.cout(), k = p.k, s = p.stride, pad = p.k / 2;
  const int H = x.dim(3), W = x.dim(4);
  Tensor gx(x.shape);

  const std::size_t xs_c = static_cast<std::size_t>(D) * H * W;
  const std::size_t xs_n = xs_c * Ci;
  const std::size_t os_c = static_cast<std::size_t>(D) * Ho * Wo;
  const std::size_t os_n = os_c * Co;

  std::array<detail::WRange, 3> wr;
  for (int kw = 0; kw < k; ++kw) wr[kw] = detail::valid_range(W, Wo, s, pad, kw);

  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      const ConvPlane plane = conv_plane_of(co, Co);
      const double* wp = p.w.data() + static_cast<std::size_t>(co) * Ci * k * k;
      double* dwp = grads.w.data() + static_cast<std::size_t>(co) * Ci * k * k;
      double db = 0.0;
      for (int d = 0; d < D; ++d) {
        for (int ho = 0; ho < Ho; ++ho) {
          const double* grow =
              gout.data() + os_n * n + os_c * co +
              (static_cast<std::size_t>(d) * Ho + ho) * Wo;
          for (int w = 0; w < Wo; ++w) db += grow[w];
          for (int ci = 0; ci < Ci; ++ci) {
            const double* xc = x.data() + xs_n * n + xs_c * ci;
            double* gxc = gx.data() + xs_n * n + xs_c * ci;
            const double* wk = wp + static_cast<std::size_t>(ci) * k * k;
            double* dwk = dwp + static_cast<std::size_t>(ci) * k * k;
            if (plane == ConvPlane::Axial) {
              for (int kh = 0; kh < k; ++kh) {
                int ih = s * ho + kh - pad;
                if (ih < 0 || ih >= H) continue;
                const std::size_t base = (static_cast<std::size_t>(d) * H + ih) * W;
                const double* xrow = xc + base;
                double* gxrow = gxc + base;
                for (int kw = 0; kw < k; ++kw) {
                  const int off = kw - pad;
                  double c = wk[kh * k + kw];
                  double acc = 0.0;
                  for (int w = wr[kw].lo; w <= wr[kw].hi; ++w) {
                    acc += grow[w] * xrow[s * w + off];
                    gxrow[s * w + off] += c * grow[w];
                  }
                  dwk[kh * k + kw] += acc;
                }
              }
            } else if (plane == ConvPlane::Coronal) {
              for (int kd = 0; kd < k; ++kd) {
                int id = d + kd - pad;
                if (id < 0 || id >= D) continue;
                const std::size_t base =
                    (static_cast<std::size_t>(id) * H + s * ho) * W;
                const double* xrow = xc + base;
                double* gxrow = gxc + base;
                for (int kw = 0; kw < k; ++kw) {
                  const int off = kw - pad;
                  double c = wk[kd * k + kw];
                  double acc = 0.0;
                  for (int w = wr[kw].lo; w <= wr[kw].hi; ++w) {
                    acc += grow[w] * xrow[s * w + off];
                    gxrow[s * w + off] += c * grow[w];
                  }
                  dwk[kd * k + kw] += acc;
                }
              }
            } else {
              for (int kd = 0; kd < k; ++kd) {
                int id = d + kd - pad;
                if (id < 0 || id >= D) continue;
                for (int kh = 0; kh < k; ++kh) {
                  int ih = s * ho + kh - pad;
                  if (ih < 0 || ih >= H) continue;
                  const std::size_t base =
                      (static_cast<std::size_t>(id) * H + ih) * W;
                  const double* xrow = xc + base;
                  double* gxrow = gxc + base;
                  double c = wk[kd * k + kh];
                  double acc = 0.0;
                  for (int w = 0; w < Wo; ++w) {
                    acc += grow[w] * xrow[s * w];
                    gxrow[s * w] += c * grow[w];
                  }
                  dwk[kd * k + kh] += acc;
                }
              }
            }
          }
        }
      }
      grads.b.v[co] += db;
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Batch normalization. Train mode normalizes with batch statistics over
// (N, D, H, W) per channel and folds them into the running estimates; eval
// mode uses the frozen running statistics and never mutates state.
// ---------------------------------------------------------------------------

constexpr double kBnEps = 1e-5;

struct BnParams {
  Tensor gamma;     // [C]
  Tensor beta;      // [C]
  Tensor run_mean;  // [C]
  Tensor run_var;   // [C]
  std::int64_t count = 0;  // number of batches folded into the running stats
  double momentum = 0.1;

  int channels() const { return gamma.dim(0); }
};

inline BnParams make_bn(int channels, double momentum = 0.1) {
  BnParams bn;
  bn.gamma = Tensor({channels});
  bn.beta = Tensor({channels});
  bn.run_mean = Tensor({channels});
  bn.run_var = Tensor({channels});
  std::fill(bn.gamma.v.begin(), bn.gamma.v.end(), 1.0);
  std::fill(bn.run_var.v.begin(), bn.run_var.v.end(), 1.0);
  bn.momentum = momentum;
  return bn;
}

struct BnCache {
  Tensor xhat;
  std::vector<double> inv_std;  // per channel
};

inline Tensor bn_forward_train(const Tensor& x, BnParams& bn, BnCache& cache) {
  const int N = x.dim(0), C = x.dim(1);
  require(C == bn.channels(), ErrorCode::BadArgument, "bn channel mismatch");
  const std::size_t spatial = x.numel() / (static_cast<std::size_t>(N) * C);
  const std::size_t cs = spatial;           // stride of channel
  const std::size_t ns = spatial * C;       // stride of sample
  const double inv_m = 1.0 / (static_cast<double>(N) * spatial);

  Tensor out(x.shape);
  cache.xhat = Tensor(x.shape);
  cache.inv_std.assign(C, 0.0);
  for (int c = 0; c < C; ++c) {
    double mean = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* xc = x.data() + ns * n + cs * c;
      for (std::size_t i = 0; i < spatial; ++i) mean += xc[i];
    }
    mean *= inv_m;
    double var = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* xc = x.data() + ns * n + cs * c;
      for (std::size_t i = 0; i < spatial; ++i) {
        double d = xc[i] - mean;
        var += d * d;
      }
    }
    var *= inv_m;
    const double inv_std = 1.0 / std::sqrt(var + kBnEps);
    cache.inv_std[c] = inv_std;
    const double g = bn.gamma.v[c], b = bn.beta.v[c];
    for (int n = 0; n < N; ++n) {
      const double* xc = x.data() + ns * n + cs * c;
      double* hc = cache.xhat.data() + ns * n + cs * c;
      double* oc = out.data() + ns * n + cs * c;
      for (std::size_t i = 0; i < spatial; ++i) {
        double h = (xc[i] - mean) * inv_std;
        hc[i] = h;
        oc[i] = g * h + b;
      }
    }
    if (bn.count == 0) {
      bn.run_mean.v[c] = mean;
      bn.run_var.v[c] = var;
    } else {
      bn.run_mean.v[c] = (1.0 - bn.momentum) * bn.run_mean.v[c] + bn.momentum * mean;
      bn.run_var.v[c] = (1.0 - bn.momentum) * bn.run_var.v[c] + bn.momentum * var;
    }
  }
  bn.count += 1;
  return out;
}

inline Tensor bn_forward_eval(const Tensor& x, const BnParams& bn) {
  const int N = x.dim(0), C = x.dim(1);
  require(C == bn.channels(), ErrorCode::BadArgument, "bn channel mismatch");
  require(bn.count > 0, ErrorCode::BadArgument,
          "bn running statistics are uninitialized (never trained)");
  const std::size_t spatial = x.numel() / (static_cast<std::size_t>(N) * C);
  Tensor out(x.shape);
  for (int c = 0; c < C; ++c) {
    const double inv_std = 1.0 / std::sqrt(bn.run_var.v[c] + kBnEps);
    const double g = bn.gamma.v[c], b = bn.beta.v[c], m = bn.run_mean.v[c];
    for (int n = 0; n < N; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i)
        out.v[base + i] = g * (x.v[base + i] - m) * inv_std + b;
    }
  }
  return out;
}

/// Backward through train-mode BN (batch statistics participate in the
/// gradient). Accumulates dgamma/dbeta; returns dL/dx.
inline Tensor bn_backward(const Tensor& gy, const BnParams& bn,
                          const BnCache& cache, BnParams& grads) {
  const int N = gy.dim(0), C = gy.dim(1);
  const std::size_t spatial = gy.numel() / (static_cast<std::size_t>(N) * C);
  const double inv_m = 1.0 / (static_cast<double>(N) * spatial);
  Tensor gx(gy.shape);
  for (int c = 0; c < C; ++c) {
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int n = 0; n < N; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_gy += gy.v[base + i];
        sum_gy_xhat += gy.v[base + i] * cache.xhat.v[base + i];
      }
    }
    grads.beta.v[c] += sum_gy;
    grads.gamma.v[c] += sum_gy_xhat;
    const double g_inv = bn.gamma.v[c] * cache.inv_std[c];
    const double mean_gy = sum_gy * inv_m;
    const double mean_gy_xhat = sum_gy_xhat * inv_m;
    for (int n = 0; n < N; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i)
        gx.v[base + i] = g_inv * (gy.v[base + i] - mean_gy -
                                  cache.xhat.v[base + i] * mean_gy_xhat);
    }
  }
  return gx;
}

/// One BN parameter set per contrast phase. Convolution weights stay shared;
/// only these replicate.
struct PhaseBn {
  std::array<BnParams, kNumPhases> slot;

  BnParams& of(Phase p) { return slot[static_cast<std::size_t>(phase_index(p))]; }
  const BnParams& of(Phase p) const {
    return slot[static_cast<std::size_t>(phase_index(p))];
  }
};

inline PhaseBn make_phase_bn(int channels, double momentum = 0.1) {
  PhaseBn pb;
  for (auto& s : pb.slot) s = make_bn(channels, momentum);
  return pb;
}

// ---------------------------------------------------------------------------
// Pointwise ops
// ---------------------------------------------------------------------------

inline Tensor relu_forward(const Tensor& x) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.v.size(); ++i) out.v[i] = x.v[i] > 0 ? x.v[i] : 0.0;
  return out;
}

inline Tensor relu_backward(const Tensor& gy, const Tensor& y) {
  Tensor gx(gy.shape);
  for (std::size_t i = 0; i < gy.v.size(); ++i) gx.v[i] = y.v[i] > 0 ? gy.v[i] : 0.0;
  return gx;
}

inline Tensor sigmoid_forward(const Tensor& x) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    double z = x.v[i];
    out.v[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                      : std::exp(z) / (1.0 + std::exp(z));
  }
  return out;
}

inline Tensor sigmoid_backward(const Tensor& gy, const Tensor& y) {
  Tensor gx(gy.shape);
  for (std::size_t i = 0; i < gy.v.size(); ++i)
    gx.v[i] = gy.v[i] * y.v[i] * (1.0 - y.v[i]);
  return gx;
}

/// Nearest-neighbour 2x upsample in-plane (H and W); depth untouched.
inline Tensor upsample2_forward(const Tensor& x) {
  const int N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  Tensor out({N, C, D, H * 2, W * 2});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int d = 0; d < D; ++d)
        for (int h = 0; h < 2 * H; ++h) {
          const double* src =
              x.data() + (((static_cast<std::size_t>(n) * C + c) * D + d) * H +
                          h / 2) * W;
          double* dst =
              out.data() + (((static_cast<std::size_t>(n) * C + c) * D + d) *
                            (2 * H) + h) * (2 * W);
          for (int w = 0; w < 2 * W; ++w) dst[w] = src[w / 2];
        }
  return out;
}

inline Tensor upsample2_backward(const Tensor& gy, const std::vector<int>& xshape) {
  const int N = xshape[0], C = xshape[1], D = xshape[2], H = xshape[3], W = xshape[4];
  Tensor gx(xshape);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int d = 0; d < D; ++d)
        for (int h = 0; h < 2 * H; ++h) {
          double* dst =
              gx.data() + (((static_cast<std::size_t>(n) * C + c) * D + d) * H +
                           h / 2) * W;
          const double* src =
              gy.data() + (((static_cast<std::size_t>(n) * C + c) * D + d) *
                           (2 * H) + h) * (2 * W);
          for (int w = 0; w < 2 * W; ++w) dst[w / 2] += src[w];
        }
  return gx;
}

}  // namespace hpvd::net
