#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hpvd/net/loss.hpp"
#include "hpvd/net/model.hpp"
#include "hpvd/rng.hpp"
#include "hpvd/volume.hpp"
#include "hpvd/windows.hpp"

namespace hpvd::net {

struct TrainConfig {
  int batch_size = 4;
  int total_batches = 2000;
  double lr = 5e-4;
  double lr_drop = 10.0;  // divide lr by this at the midpoint
  std::uint64_t seed = 1;
  std::array<int, 3> crop = {64, 64, 16};  // (x, y, z)
  LossConfig loss;
  double bn_momentum = 0.1;

  double lr_at(int batch) const {
    return batch < total_batches / 2 ? lr : lr / lr_drop;
  }
};

struct BatchLog {
  int batch = 0;
  double loss = 0.0;
  double lr = 0.0;
  PhaseSet phases;
};

/// Adam over the fixed parameter registry order.
class Adam {
public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : b1_(beta1), b2_(beta2), eps_(eps) {
    m_ = make_zero_grads();
    v_ = make_zero_grads();
  }

  void step(NetParams& params, NetParams& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    std::vector<Tensor*> ps, gs, ms, vs;
    for_each_param(params, [&](const std::string&, const char*, Tensor& t) { ps.push_back(&t); });
    for_each_param(grads, [&](const std::string&, const char*, Tensor& t) { gs.push_back(&t); });
    for_each_param(m_, [&](const std::string&, const char*, Tensor& t) { ms.push_back(&t); });
    for_each_param(v_, [&](const std::string&, const char*, Tensor& t) { vs.push_back(&t); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Tensor& p = *ps[i];
      const Tensor& g = *gs[i];
      Tensor& m = *ms[i];
      Tensor& v = *vs[i];
      for (std::size_t j = 0; j < p.v.size(); ++j) {
        m.v[j] = b1_ * m.v[j] + (1.0 - b1_) * g.v[j];
        v.v[j] = b2_ * v.v[j] + (1.0 - b2_) * g.v[j] * g.v[j];
        p.v[j] -= lr * (m.v[j] / bc1) / (std::sqrt(v.v[j] / bc2) + eps_);
      }
    }
  }

private:
  double b1_, b2_, eps_;
  int t_ = 0;
  NetParams m_, v_;
};

namespace detail {

inline Tensor crops_to_tensor(const std::vector<const Volume*>& vols) {
  const Volume& ref = *vols.front();
  Tensor t({static_cast<int>(vols.size()), 1, ref.nz, ref.ny, ref.nx});
  const std::size_t n = ref.numel();
  for (std::size_t i = 0; i < vols.size(); ++i)
    std::copy(vols[i]->data.begin(), vols[i]->data.end(), t.v.begin() + n * i);
  return t;
}

}  // namespace detail

struct TrainResult {
  NetParams params;
  std::vector<BatchLog> log;
};

/// Trains the detector. Each batch draws one uniformly random nonempty phase
/// subset (15 options) and batch_size random crops from random studies.
/// Deterministic given the seed: two runs produce bit-identical parameters.
inline TrainResult train(const std::vector<Study>& studies, const TrainConfig& cfg) {
  require(!studies.empty(), ErrorCode::BadArgument, "training set is empty");
  require(cfg.batch_size > 0 && cfg.total_batches > 0, ErrorCode::BadArgument,
          "batch counts must be positive");
  for (const Study& s : studies) {
    const Volume& v = s.any_volume();
    require(cfg.crop[0] <= v.nx && cfg.crop[1] <= v.ny && cfg.crop[2] <= v.nz,
            ErrorCode::BadArgument, "crop larger than study volume: " + s.id);
  }

  Rng rng(cfg.seed);
  TrainResult result;
  result.params = init_net_params(rng.next_u64(), cfg.bn_momentum);
  Adam opt;

  for (int batch = 0; batch < cfg.total_batches; ++batch) {
    const PhaseSet subset =
        PhaseSet::from_mask(static_cast<unsigned>(rng.uniform_int(1, 15)));

    // Assemble the batch: one shared phase subset, independent random crops.
    std::vector<StudyCrop> crops;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const Study& s =
          studies[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(studies.size()) - 1))];
      for (Phase p : subset.phases())
        require(s.volumes.count(p) > 0, ErrorCode::MissingPhase,
                "study " + s.id + " lacks phase " + phase_name(p));
      crops.push_back(crop_random(s, cfg.crop, rng.next_u64()));
    }

    std::map<Phase, Tensor> inputs;
    for (Phase p : subset.phases()) {
      std::vector<const Volume*> vols;
      for (const StudyCrop& c : crops) vols.push_back(&c.volumes.at(p));
      inputs.emplace(p, detail::crops_to_tensor(vols));
    }
    std::vector<std::vector<Box3>> boxes;
    for (const StudyCrop& c : crops) {
      std::vector<Box3> bs;
      for (const auto& l : c.lesions) bs.push_back(l.box);
      boxes.push_back(std::move(bs));
    }

    ForwardCache cache;
    HeadOut out = forward_train(result.params, inputs, cache);
    HeatmapTargets targets = build_targets(boxes, out.heatmap.dim(2),
                                           out.heatmap.dim(3), out.heatmap.dim(4));
    LossResult loss = centernet_loss(out.heatmap, out.size, targets, cfg.loss);
    require(std::isfinite(loss.loss), ErrorCode::NumericDivergence,
            "training diverged at batch " + std::to_string(batch));

    NetParams grads = make_zero_grads();
    backward(result.params, cache, loss.d_heatmap, loss.d_size, grads);
    opt.step(result.params, grads, cfg.lr_at(batch));

    result.log.push_back({batch, loss.loss, cfg.lr_at(batch), subset});
  }
  return result;
}

}  // namespace hpvd::net
