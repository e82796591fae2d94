#pragma once

#include <map>
#include <vector>

#include "hpvd/net/decode.hpp"
#include "hpvd/net/model.hpp"
#include "hpvd/volume.hpp"
#include "hpvd/windows.hpp"

namespace hpvd::net {

struct InferConfig {
  int window_depth = 48;
  int overlap_depth = 16;
  int k_max = 20;
  double score_min = 0.05;
};

namespace detail {

inline Tensor window_to_tensor(const Volume& v, DepthRange r) {
  Tensor t({1, 1, r.length(), v.ny, v.nx});
  const std::size_t plane = static_cast<std::size_t>(v.nx) * v.ny;
  std::copy(v.data.begin() + plane * r.z0, v.data.begin() + plane * r.z1,
            t.v.begin());
  return t;
}

}  // namespace detail

/// Whole-study inference: normalize the requested phases, run depth windows
/// through the network, stitch the head maps (overlaps averaged), then
/// decode on the stitched fields. Detections come back in full-volume voxel
/// coordinates, unfiltered.
inline std::vector<Detection> infer_study(const Study& s, const NetParams& params,
                                          const PhaseStats& stats,
                                          PhaseSet requested,
                                          const InferConfig& cfg = {}) {
  const PhaseSet present = s.phases();
  for (Phase p : requested.phases())
    require(present.contains(p), ErrorCode::MissingPhase,
            "study " + s.id + " lacks requested phase " + phase_name(p));

  std::map<Phase, Volume> normalized;
  for (Phase p : requested.phases())
    normalized.emplace(p, normalize(s.volumes.at(p), stats));

  const Volume& ref = s.any_volume();
  const auto ranges = sliding_windows(ref.nz, cfg.window_depth, cfg.overlap_depth);

  const int Hf = ref.ny / kHeadStride, Wf = ref.nx / kHeadStride;
  std::vector<WindowField> hm_fields;
  std::array<std::vector<WindowField>, 3> size_fields;
  for (const DepthRange& r : ranges) {
    std::map<Phase, Tensor> inputs;
    for (const auto& [p, v] : normalized)
      inputs.emplace(p, detail::window_to_tensor(v, r));
    HeadOut out = forward_eval(params, inputs);
    HeadFields f = head_fields_from_batch(out);
    hm_fields.push_back({r, Wf, Hf, std::move(f.heatmap)});
    for (int axis = 0; axis < 3; ++axis)
      size_fields[static_cast<std::size_t>(axis)].push_back(
          {r, Wf, Hf, std::move(f.size[static_cast<std::size_t>(axis)])});
  }

  HeadFields stitched;
  stitched.D = ref.nz;
  stitched.Hf = Hf;
  stitched.Wf = Wf;
  stitched.heatmap = stitch(hm_fields, Wf, Hf, ref.nz);
  for (int axis = 0; axis < 3; ++axis)
    stitched.size[static_cast<std::size_t>(axis)] =
        stitch(size_fields[static_cast<std::size_t>(axis)], Wf, Hf, ref.nz);

  return decode(stitched, cfg.k_max, cfg.score_min);
}

}  // namespace hpvd::net
