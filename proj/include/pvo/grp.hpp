/* Copyright 2026 The pvo Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef PVO_GRP_HPP_
#define PVO_GRP_HPP_

#include <array>
#include <vector>

#include "pvo/array.hpp"
#include "pvo/voxelize.hpp"

namespace pvo {

// One attention projection set. wpos maps the 5-dim relative position
// feature [dr, dtheta*r_mean, dz, bev_radial, bev_tangential] to a scalar
// bias per (query, key) pair.
struct AttnProjection {
  Array wq, wk, wv;  // [C, C]
  Array wpos;        // [5]
};

// Window condensation, three axial passes and reverse propagation keep
// separate projections.
struct GrpParams {
  int window = 2;           // S, cube window edge in bins
  bool literal_eq = false;  // printed-equation form, forward only
  AttnProjection condense;
  std::array<AttnProjection, 3> axial;  // radial, azimuth, height passes
  AttnProjection reverse;
};

GrpParams make_grp_params(int channels, int window);

struct MaxselResult {
  Array feature;  // [C]
  int index = 0;  // flat row-major position inside the window
};

// Feature vector with maximal L2 norm; ties resolve to the lowest flat index.
MaxselResult maxsel(const Array& window);

// Condensed representative grid. rep_index holds, per window, the selected
// voxel's index in original (unpadded) grid coordinates; pad-halo selections
// may land outside [0, bins) and their centers extrapolate the grid.
struct CondensedVolume {
  GridSpec spec;
  int window = 2;
  int channels = 0;
  std::array<int, 3> full_bins{};  // unpadded input extents
  std::array<int, 3> padded{};     // extents after symmetric zero padding
  std::array<int, 3> pad_lo{};
  std::array<int, 3> bins{};       // padded / window
  Array data;                      // [bins0, bins1, bins2, C]
  std::vector<std::array<int, 3>> rep_index;

  void rep_centers(int64_t window_id, PolarPoint* polar, CartPoint* cart) const;
};

// Caches for the hand-derived backward pass.
struct AttnCache {
  Array xq, xkv;      // inputs
  Array q, k, v;      // projections
  Array off5;         // [nq, nk, 5]
  Array bias_pre;     // [nq, nk] pre-ReLU positional term
  Array weights;      // [nq, nk] softmax rows
};

struct GrpCache {
  Array padded;                      // zero-padded input features
  CondensedVolume cond0;             // condense output
  std::vector<AttnCache> condense;   // one per window
  std::array<Array, 3> axial_input;  // input of each axial pass
  std::array<std::vector<AttnCache>, 3> axial;
  Array cond_final;                  // after the third axial pass
  std::vector<AttnCache> reverse;    // one per window (queries = its voxels)
  std::vector<std::vector<int64_t>> reverse_keys;  // condensed ids per window
};

// (1) max-selected window queries cross-attend over their window features.
CondensedVolume local_condense_attention(const FeatureVolume& f,
                                         const GrpParams& params,
                                         GrpCache* cache = nullptr);

// (2) axial self-attention along radial, azimuth, then height strips, each
// with a residual connection.
CondensedVolume global_decomposed_attention(const CondensedVolume& cond,
                                            const GrpParams& params,
                                            GrpCache* cache = nullptr);

// (3) every full-resolution voxel cross-attends over the condensed features
// of its own window and the face-adjacent windows (azimuth wraps); the result
// is added residually.
FeatureVolume reverse_propagate(const FeatureVolume& f,
                                const CondensedVolume& cond,
                                const GrpParams& params,
                                GrpCache* cache = nullptr);

FeatureVolume grp_forward(const FeatureVolume& f, const GrpParams& params,
                          GrpCache* cache = nullptr);

// Gradients w.r.t. the input features and every projection. Requires the
// cache of a previous grp_forward; rejects literal_eq mode.
void grp_backward(const FeatureVolume& f, const GrpParams& params,
                  const GrpCache& cache, const Array& dout, Array& dinput,
                  GrpParams& dparams);

}  // namespace pvo

#endif  // PVO_GRP_HPP_
