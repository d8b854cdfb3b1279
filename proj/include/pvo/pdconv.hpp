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
#ifndef PVO_PDCONV_HPP_
#define PVO_PDCONV_HPP_

#include <array>
#include <string>
#include <vector>

#include "pvo/array.hpp"

namespace pvo {

// Stacking topologies, named after the ablation rows they mirror.
//   a      serial chain k_r -> k_a -> k_z
//   b      parallel mean of the three single-kernel branches
//   c      mean of two serial chains with different kernel order
//   d      mean of all three cyclic-order serial chains
//   assym  single two-kernel chain k_r -> k_a (no height kernel)
//   naive  one full 3x3x3 convolution (the undecomposed baseline)
enum class PdTopology { kA, kB, kC, kD, kAssym, kNaive };

PdTopology pd_topology_from_string(const std::string& name);
std::string pd_topology_to_string(PdTopology t);

struct PdStackConfig {
  PdTopology topology = PdTopology::kA;
  // Test-only switch disabling every ReLU so serial chains become linear and
  // comparable against a single composed-kernel convolution.
  bool linear_mode = false;
};

// Axis-decomposed kernels. k_r collapses the range axis (1x3x3), k_a the
// azimuth axis (3x1x3), k_z the height axis (3x3x1). k3 is the full 3x3x3
// kernel used only by the naive topology.
struct PdBlockParams {
  Array k_r;  // [1,3,3,Cin,Cout]
  Array k_a;  // [3,1,3,Cout,Cout]
  Array k_z;  // [3,3,1,Cout,Cout]
  Array k3;   // [3,3,3,Cin,Cout]
};

// Kernel chains per topology, as indices into {0: k_r, 1: k_a, 2: k_z}.
std::vector<std::vector<int>> pd_chains(PdTopology t);

struct PdBlockCache {
  // Pre-activation conv outputs per chain and step.
  std::vector<std::vector<Array>> pre;
};

// Output extents equal input extents for every topology.
Array pd_block_forward(const Array& x, const PdBlockParams& params,
                       const PdStackConfig& cfg, const ConvPadding& pad,
                       PdBlockCache* cache = nullptr);

void pd_block_backward(const Array& x, const PdBlockParams& params,
                       const PdStackConfig& cfg, const ConvPadding& pad,
                       const PdBlockCache& cache, const Array& dout,
                       Array& dx, PdBlockParams& dparams);

struct PdBlockStats {
  int64_t params = 0;     // learnable weights in the block
  int64_t multiplies = 0; // multiply count for a given input extent
};

PdBlockStats pd_block_stats(const PdStackConfig& cfg, int cin, int cout,
                            const std::array<int, 3>& extents);

// ---- backbone ----

struct BackboneConfig {
  PdStackConfig block;
  // Per-stage pooling strides on (axis0, axis1, axis2); one block per stage.
  std::vector<std::array<int, 3>> schedule;
};

struct BackboneParams {
  Array stem;  // [1,1,1,Cin,C] channel embedding; empty to skip
  std::vector<PdBlockParams> blocks;
};

std::array<int, 3> backbone_output_extents(
    const std::array<int, 3>& in, const std::vector<std::array<int, 3>>& schedule);

struct BackboneCache {
  Array stem_pre;                  // pre-ReLU stem output
  std::vector<Array> stage_input;  // pooled input of each stage's block
  std::vector<PdBlockCache> block_cache;
};

Array backbone_forward(const Array& x, const BackboneParams& params,
                       const BackboneConfig& cfg, const ConvPadding& pad,
                       BackboneCache* cache = nullptr);

void backbone_backward(const Array& x, const BackboneParams& params,
                       const BackboneConfig& cfg, const ConvPadding& pad,
                       const BackboneCache& cache, const Array& dout,
                       Array& dx, BackboneParams& dparams);

}  // namespace pvo

#endif  // PVO_PDCONV_HPP_
