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
#ifndef PVO_FUSION_HPP_
#define PVO_FUSION_HPP_

#include "pvo/array.hpp"
#include "pvo/voxelize.hpp"

namespace pvo {

// Gate network: concat(F_L, F_C) -> 3x3x3 conv -> linear projection to one
// channel (+bias) -> sigmoid. The per-voxel scalar gate W blends the two
// volumes as W*F_L + (1-W)*F_C. Forcing the bias to +-1000 saturates the gate
// to exactly 1/0 in double precision (test hook).
struct FusionParams {
  Array gate_kernel;  // [3,3,3, 2C, Cg]
  Array gate_proj;    // [Cg]
  Array gate_bias;    // [1]
};

FusionParams make_fusion_params(int channels, int gate_channels);

struct FusionCache {
  Array concat;    // [R,A,Z,2C]
  Array conv_out;  // [R,A,Z,Cg]
  Array gate;      // [R,A,Z,1]
};

FeatureVolume modal_fuse(const FeatureVolume& f_lidar,
                         const FeatureVolume& f_camera,
                         const FusionParams& params, const ConvPadding& pad,
                         FusionCache* cache = nullptr);

void modal_fuse_backward(const FeatureVolume& f_lidar,
                         const FeatureVolume& f_camera,
                         const FusionParams& params, const ConvPadding& pad,
                         const FusionCache& cache, const Array& dout,
                         Array& d_lidar, Array& d_camera,
                         FusionParams& dparams);

}  // namespace pvo

#endif  // PVO_FUSION_HPP_
