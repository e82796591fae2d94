#pragma once

#include <map>
#include <string>
#include <vector>

#include "hpvd/net/layers.hpp"
#include "hpvd/rng.hpp"

namespace hpvd::net {

// ---------------------------------------------------------------------------
// Hetero-phase volumetric detector, desk scale.
//
//   per phase k:  x_k -> stem conv (1->8, s2 in-plane) -> BN_k -> ReLU
//                     -> block conv (8->8)             -> BN_k -> ReLU = a_k
//   fusion:       a = conv_m(mean{a_k}) + conv_v(var{a_k}) -> ReLU
//   trunk:        conv (16->16, s2) -> BN -> ReLU          (stride 4)
//                 conv (16->32, s2) -> BN -> ReLU          (stride 8)
//   FPN:          1x1 laterals to 16ch, nearest 2x up, add, smooth conv
//   heads:        center -> 1ch sigmoid heatmap; size -> 3ch log-extents
//
// Convolution weights are shared across phases; only BN parameters and
// running statistics replicate per phase. The mean/variance junction is the
// single point where phases meet, so any subset of the four phases (15
// combinations) runs through one set of weights.
// ---------------------------------------------------------------------------

struct EncoderParams {
  ConvParams stem;
  PhaseBn bn_stem;
  ConvParams block;
  PhaseBn bn_block;
};

struct FusionParams {
  ConvParams conv_mean;
  ConvParams conv_var;
};

struct TrunkParams {
  ConvParams c1;
  BnParams bn1;
  ConvParams c2;
  BnParams bn2;
};

struct FpnParams {
  ConvParams lateral_hi;  // stride-4 level
  ConvParams lateral_lo;  // stride-8 level
  ConvParams smooth;
};

struct HeadParams {
  ConvParams hidden;
  ConvParams out;
};

struct NetParams {
  EncoderParams enc;
  FusionParams fusion;
  TrunkParams trunk;
  FpnParams fpn;
  HeadParams center;
  HeadParams size;
};

constexpr int kStemCh = 8;
constexpr int kFuseCh = 16;
constexpr int kTrunkHiCh = 16;
constexpr int kTrunkLoCh = 32;
constexpr int kHeadHiddenCh = 8;
constexpr int kHeadStride = 4;  // in-plane stride of the head grid
// Initial center-head bias puts the sigmoid prior at ~0.05 foreground.
constexpr double kCenterBiasPrior = -2.9444389791664403;

inline NetParams make_net_params(double bn_momentum = 0.1) {
  NetParams p;
  p.enc.stem = make_conv(kStemCh, 1, 3, 2);
  p.enc.bn_stem = make_phase_bn(kStemCh, bn_momentum);
  p.enc.block = make_conv(kStemCh, kStemCh, 3, 1);
  p.enc.bn_block = make_phase_bn(kStemCh, bn_momentum);
  p.fusion.conv_mean = make_conv(kFuseCh, kStemCh, 3, 1);
  p.fusion.conv_var = make_conv(kFuseCh, kStemCh, 3, 1);
  p.trunk.c1 = make_conv(kTrunkHiCh, kFuseCh, 3, 2);
  p.trunk.bn1 = make_bn(kTrunkHiCh, bn_momentum);
  p.trunk.c2 = make_conv(kTrunkLoCh, kTrunkHiCh, 3, 2);
  p.trunk.bn2 = make_bn(kTrunkLoCh, bn_momentum);
  p.fpn.lateral_hi = make_conv(kFuseCh, kTrunkHiCh, 1, 1);
  p.fpn.lateral_lo = make_conv(kFuseCh, kTrunkLoCh, 1, 1);
  p.fpn.smooth = make_conv(kFuseCh, kFuseCh, 3, 1);
  p.center.hidden = make_conv(kHeadHiddenCh, kFuseCh, 3, 1);
  p.center.out = make_conv(1, kHeadHiddenCh, 1, 1);
  p.size.hidden = make_conv(kHeadHiddenCh, kFuseCh, 3, 1);
  p.size.out = make_conv(3, kHeadHiddenCh, 1, 1);
  return p;
}

/// Visits every learnable tensor in a fixed order: (name, group, tensor).
/// The order is part of the determinism contract (Adam state and
/// checkpoints key off it).
template <typename F>
void for_each_param(NetParams& p, F&& f) {
  auto conv = [&](const std::string& name, const char* group, ConvParams& c) {
    f(name + ".w", group, c.w);
    f(name + ".b", group, c.b);
  };
  auto phase_bn = [&](const std::string& name, PhaseBn& pb) {
    for (Phase ph : all_phases()) {
      BnParams& bn = pb.of(ph);
      f(name + "." + phase_name(ph) + ".gamma", "bn_affine", bn.gamma);
      f(name + "." + phase_name(ph) + ".beta", "bn_affine", bn.beta);
    }
  };
  conv("enc.stem", "encoder", p.enc.stem);
  conv("enc.block", "encoder", p.enc.block);
  phase_bn("enc.bn_stem", p.enc.bn_stem);
  phase_bn("enc.bn_block", p.enc.bn_block);
  conv("fusion.conv_mean", "fusion_mean", p.fusion.conv_mean);
  conv("fusion.conv_var", "fusion_var", p.fusion.conv_var);
  conv("trunk.c1", "trunk", p.trunk.c1);
  conv("trunk.c2", "trunk", p.trunk.c2);
  f("trunk.bn1.gamma", "bn_affine", p.trunk.bn1.gamma);
  f("trunk.bn1.beta", "bn_affine", p.trunk.bn1.beta);
  f("trunk.bn2.gamma", "bn_affine", p.trunk.bn2.gamma);
  f("trunk.bn2.beta", "bn_affine", p.trunk.bn2.beta);
  conv("fpn.lateral_hi", "fpn", p.fpn.lateral_hi);
  conv("fpn.lateral_lo", "fpn", p.fpn.lateral_lo);
  conv("fpn.smooth", "fpn", p.fpn.smooth);
  conv("center.hidden", "head", p.center.hidden);
  conv("center.out", "head", p.center.out);
  conv("size.hidden", "head", p.size.hidden);
  conv("size.out", "head", p.size.out);
}

/// Visits every BN parameter set (running statistics live here).
template <typename F>
void for_each_bn(NetParams& p, F&& f) {
  for (Phase ph : all_phases())
    f(std::string("enc.bn_stem.") + phase_name(ph), p.enc.bn_stem.of(ph));
  for (Phase ph : all_phases())
    f(std::string("enc.bn_block.") + phase_name(ph), p.enc.bn_block.of(ph));
  f(std::string("trunk.bn1"), p.trunk.bn1);
  f(std::string("trunk.bn2"), p.trunk.bn2);
}

/// He-uniform initialization for convolution weights (fan-in of the 2D
/// kernel), zero biases except the center-head prior, BN gamma=1 beta=0.
inline NetParams init_net_params(std::uint64_t seed, double bn_momentum = 0.1) {
  NetParams p = make_net_params(bn_momentum);
  Rng rng(seed);
  auto he_init = [&](ConvParams& c) {
    double bound = std::sqrt(6.0 / (static_cast<double>(c.cin()) * c.k * c.k));
    for (double& w : c.w.v) w = rng.uniform(-bound, bound);
    c.b.zero();
  };
  he_init(p.enc.stem);
  he_init(p.enc.block);
  he_init(p.fusion.conv_mean);
  he_init(p.fusion.conv_var);
  he_init(p.trunk.c1);
  he_init(p.trunk.c2);
  he_init(p.fpn.lateral_hi);
  he_init(p.fpn.lateral_lo);
  he_init(p.fpn.smooth);
  he_init(p.center.hidden);
  he_init(p.center.out);
  he_init(p.size.hidden);
  he_init(p.size.out);
  p.center.out.b.v[0] = kCenterBiasPrior;
  return p;
}

/// Same shapes as the learnables, zero-filled; used for gradients and
/// optimizer state.
inline NetParams make_zero_grads() {
  NetParams g = make_net_params();
  for_each_param(g, [](const std::string&, const char*, Tensor& t) { t.zero(); });
  return g;
}

struct HeadOut {
  Tensor heatmap;  // [N, 1, D, H/4, W/4], sigmoid-activated
  Tensor size;     // [N, 3, D, H/4, W/4], log-extent per axis (x, y, z)
};

struct PhaseEncCache {
  Phase phase = Phase::NC;
  Tensor x;  // input crop [N,1,D,H,W]
  BnCache bn1;
  Tensor relu1;
  BnCache bn2;
  Tensor a;  // encoder output
};

struct ForwardCache {
  std::vector<PhaseEncCache> enc;  // canonical phase order
  Tensor mean, var;
  Tensor fused_relu;
  BnCache t1_bn;
  Tensor t1_relu;
  BnCache t2_bn;
  Tensor t2_relu;
  Tensor lat_lo_shapeholder;  // shape of lateral_lo output for upsample bwd
  Tensor merged;
  Tensor smooth_relu;
  Tensor c_hidden_relu;
  Tensor heatmap;
  Tensor s_hidden_relu;
};

/// Shared-weight encoder with phase-k batch normalization:
/// a_k = ReLU(BN_k(block(ReLU(BN_k(stem(x)))))). Train mode uses batch
/// statistics and folds running updates; eval mode is pure.
inline Tensor phase_encode(const Tensor& x, Phase ph, EncoderParams& enc,
                           bool train, PhaseEncCache* cache = nullptr) {
  PhaseEncCache local;
  PhaseEncCache& ec = cache ? *cache : local;
  ec.phase = ph;
  Tensor c1 = acs_conv_forward(x, enc.stem);
  Tensor r1 = train ? bn_forward_train(c1, enc.bn_stem.of(ph), ec.bn1)
                    : bn_forward_eval(c1, enc.bn_stem.of(ph));
  r1 = relu_forward(r1);
  Tensor c2 = acs_conv_forward(r1, enc.block);
  Tensor a = train ? bn_forward_train(c2, enc.bn_block.of(ph), ec.bn2)
                   : bn_forward_eval(c2, enc.bn_block.of(ph));
  a = relu_forward(a);
  if (cache) {
    ec.x = x;
    ec.relu1 = std::move(r1);
    ec.a = a;
  }
  return a;
}

inline Tensor phase_encode_eval(const Tensor& x, Phase ph,
                                const EncoderParams& enc) {
  return phase_encode(x, ph, const_cast<EncoderParams&>(enc), false, nullptr);
}

/// Elementwise mean and population variance over the feature set. Singleton
/// sets get variance 0, so fuse({a}) == fuse({a, a}) exactly.
inline void mean_var(const std::vector<Tensor>& feats, Tensor& mean, Tensor& var) {
  require(!feats.empty(), ErrorCode::BadArgument, "fusion needs >= 1 feature");
  const std::size_t K = feats.size();
  mean = Tensor(feats[0].shape);
  for (const Tensor& a : feats) accumulate(mean, a);
  for (double& v : mean.v) v /= static_cast<double>(K);
  var = Tensor(feats[0].shape);
  for (const Tensor& a : feats) {
    require(a.same_shape(mean), ErrorCode::DimsMismatch,
            "fusion features must share one shape");
    for (std::size_t i = 0; i < var.v.size(); ++i) {
      double d = a.v[i] - mean.v[i];
      var.v[i] += d * d;
    }
  }
  for (double& v : var.v) v /= static_cast<double>(K);
}

/// a = conv_m(mean(A)) + conv_v(var(A)); agnostic to order and count.
inline Tensor fuse(const std::vector<Tensor>& feats, const FusionParams& fp) {
  Tensor mean, var;
  mean_var(feats, mean, var);
  Tensor out = acs_conv_forward(mean, fp.conv_mean);
  Tensor cv = acs_conv_forward(var, fp.conv_var);
  accumulate(out, cv);
  return out;
}

namespace detail {

inline void check_inputs(const std::map<Phase, Tensor>& inputs) {
  require(!inputs.empty(), ErrorCode::MissingPhase,
          "forward needs at least one phase input");
  const Tensor& ref = inputs.begin()->second;
  require(ref.shape.size() == 5 && ref.dim(1) == 1, ErrorCode::BadArgument,
          "phase inputs must be [N,1,D,H,W]");
  require(ref.dim(3) % 8 == 0 && ref.dim(4) % 8 == 0, ErrorCode::BadArgument,
          "in-plane dims must be divisible by 8");
  for (const auto& [p, t] : inputs)
    require(t.shape == ref.shape, ErrorCode::DimsMismatch,
            "phase inputs must share one shape");
}

inline HeadOut forward_impl(NetParams& p, const std::map<Phase, Tensor>& inputs,
                            bool train, ForwardCache* cache) {
  check_inputs(inputs);

  // Per-phase encoders: shared conv weights, phase-specific BN.
  std::vector<Tensor> feats;
  for (const auto& [ph, x] : inputs) {  // std::map iterates NC<AP<VP<DP
    PhaseEncCache ec;
    feats.push_back(phase_encode(x, ph, p.enc, train, cache ? &ec : nullptr));
    if (cache) cache->enc.push_back(std::move(ec));
  }

  // Mean/variance fusion: order- and cardinality-agnostic.
  Tensor mean, var;
  mean_var(feats, mean, var);
  Tensor fused = acs_conv_forward(mean, p.fusion.conv_mean);
  {
    Tensor cv = acs_conv_forward(var, p.fusion.conv_var);
    accumulate(fused, cv);
  }
  Tensor fused_relu = relu_forward(fused);

  // Trunk to strides 4 and 8.
  BnCache t1_bn, t2_bn;
  Tensor t1 = acs_conv_forward(fused_relu, p.trunk.c1);
  t1 = train ? bn_forward_train(t1, p.trunk.bn1, t1_bn)
             : bn_forward_eval(t1, p.trunk.bn1);
  Tensor t1_relu = relu_forward(t1);
  Tensor t2 = acs_conv_forward(t1_relu, p.trunk.c2);
  t2 = train ? bn_forward_train(t2, p.trunk.bn2, t2_bn)
             : bn_forward_eval(t2, p.trunk.bn2);
  Tensor t2_relu = relu_forward(t2);

  // FPN merge back to stride 4.
  Tensor lat_hi = acs_conv_forward(t1_relu, p.fpn.lateral_hi);
  Tensor lat_lo = acs_conv_forward(t2_relu, p.fpn.lateral_lo);
  Tensor merged = upsample2_forward(lat_lo);
  accumulate(merged, lat_hi);
  Tensor smooth = acs_conv_forward(merged, p.fpn.smooth);
  Tensor smooth_relu = relu_forward(smooth);

  // Heads.
  Tensor ch = relu_forward(acs_conv_forward(smooth_relu, p.center.hidden));
  Tensor heatmap = sigmoid_forward(acs_conv_forward(ch, p.center.out));
  Tensor sh = relu_forward(acs_conv_forward(smooth_relu, p.size.hidden));
  Tensor size_map = acs_conv_forward(sh, p.size.out);

  if (cache) {
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->fused_relu = fused_relu;
    cache->t1_bn = std::move(t1_bn);
    cache->t1_relu = t1_relu;
    cache->t2_bn = std::move(t2_bn);
    cache->t2_relu = t2_relu;
    cache->lat_lo_shapeholder = Tensor(lat_lo.shape);
    cache->merged = merged;
    cache->smooth_relu = smooth_relu;
    cache->c_hidden_relu = ch;
    cache->heatmap = heatmap;
    cache->s_hidden_relu = sh;
  }
  HeadOut out;
  out.heatmap = std::move(heatmap);
  out.size = std::move(size_map);
  return out;
}

}  // namespace detail

/// Training-mode forward: batch BN statistics, running stats folded in,
/// intermediate activations cached for backward.
inline HeadOut forward_train(NetParams& p, const std::map<Phase, Tensor>& inputs,
                             ForwardCache& cache) {
  cache = ForwardCache{};
  return detail::forward_impl(p, inputs, true, &cache);
}

/// Eval-mode forward: frozen running statistics, no state mutation.
inline HeadOut forward_eval(const NetParams& p,
                            const std::map<Phase, Tensor>& inputs) {
  // eval path never writes through this reference
  return detail::forward_impl(const_cast<NetParams&>(p), inputs, false, nullptr);
}

/// Backward from head gradients to parameter gradients (accumulated into
/// `grads`). d_heatmap is w.r.t. the sigmoided heatmap.
inline void backward(NetParams& p, const ForwardCache& cache,
                     const Tensor& d_heatmap, const Tensor& d_size,
                     NetParams& grads) {
  // center head
  Tensor g = sigmoid_backward(d_heatmap, cache.heatmap);
  g = acs_conv_backward(cache.c_hidden_relu, p.center.out, g, grads.center.out);
  g = relu_backward(g, cache.c_hidden_relu);
  Tensor d_smooth =
      acs_conv_backward(cache.smooth_relu, p.center.hidden, g, grads.center.hidden);
  // size head
  g = acs_conv_backward(cache.s_hidden_relu, p.size.out, d_size, grads.size.out);
  g = relu_backward(g, cache.s_hidden_relu);
  accumulate(d_smooth, acs_conv_backward(cache.smooth_relu, p.size.hidden, g,
                                         grads.size.hidden));

  // FPN
  g = relu_backward(d_smooth, cache.smooth_relu);
  Tensor d_merged = acs_conv_backward(cache.merged, p.fpn.smooth, g, grads.fpn.smooth);
  Tensor d_lat_lo = upsample2_backward(d_merged, cache.lat_lo_shapeholder.shape);
  Tensor d_t1 = acs_conv_backward(cache.t1_relu, p.fpn.lateral_hi, d_merged,
                                  grads.fpn.lateral_hi);
  Tensor d_t2 = acs_conv_backward(cache.t2_relu, p.fpn.lateral_lo, d_lat_lo,
                                  grads.fpn.lateral_lo);

  // trunk
  g = relu_backward(d_t2, cache.t2_relu);
  g = bn_backward(g, p.trunk.bn2, cache.t2_bn, grads.trunk.bn2);
  accumulate(d_t1, acs_conv_backward(cache.t1_relu, p.trunk.c2, g, grads.trunk.c2));
  g = relu_backward(d_t1, cache.t1_relu);
  g = bn_backward(g, p.trunk.bn1, cache.t1_bn, grads.trunk.bn1);
  Tensor d_fused = acs_conv_backward(cache.fused_relu, p.trunk.c1, g, grads.trunk.c1);

  // fusion
  g = relu_backward(d_fused, cache.fused_relu);
  Tensor d_mean = acs_conv_backward(cache.mean, p.fusion.conv_mean, g,
                                    grads.fusion.conv_mean);
  Tensor d_var = acs_conv_backward(cache.var, p.fusion.conv_var, g,
                                   grads.fusion.conv_var);

  // distribute through mean/var to each phase feature:
  //   d a_k = d_mean / K + d_var * 2 (a_k - mean) / K
  const double K = static_cast<double>(cache.enc.size());
  for (const PhaseEncCache& ec : cache.enc) {
    Tensor da(ec.a.shape);
    for (std::size_t i = 0; i < da.v.size(); ++i)
      da.v[i] = d_mean.v[i] / K +
                d_var.v[i] * 2.0 * (ec.a.v[i] - cache.mean.v[i]) / K;
    Tensor ge = relu_backward(da, ec.a);
    ge = bn_backward(ge, p.enc.bn_block.of(ec.phase), ec.bn2,
                     grads.enc.bn_block.of(ec.phase));
    ge = acs_conv_backward(ec.relu1, p.enc.block, ge, grads.enc.block);
    ge = relu_backward(ge, ec.relu1);
    ge = bn_backward(ge, p.enc.bn_stem.of(ec.phase), ec.bn1,
                     grads.enc.bn_stem.of(ec.phase));
    acs_conv_backward(ec.x, p.enc.stem, ge, grads.enc.stem);
  }
}

}  // namespace hpvd::net
