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
#ifndef PVO_HEAD_HPP_
#define PVO_HEAD_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pvo/array.hpp"
#include "pvo/geometry.hpp"
#include "pvo/voxelize.hpp"

namespace pvo {

// Dense class labels on the Cartesian output grid. Label 0 is reserved for
// free space.
struct SemanticGrid {
  CartesianGridSpec spec;
  int n_classes = 0;
  std::vector<uint16_t> labels;  // bins_x * bins_y * bins_z, row-major

  static SemanticGrid zeros(const CartesianGridSpec& spec, int n_classes);
  int64_t numel() const { return static_cast<int64_t>(labels.size()); }
  void validate() const;

  // Binary container: magic "PVOSEM1", u32 extents (3), u16 labels.
  void save(const std::string& path) const;
  static SemanticGrid load(const std::string& path, int n_classes);
  // {"counts": {"<class>": n, ...}}
  std::string summary_json() const;
};

struct HeadParams {
  Array classifier;  // [C, n_classes]
  Array bias;        // [n_classes]
};

// Up to 8 interpolation corners for one query.
struct SampleTap {
  int64_t voxel = 0;  // flat spatial index
  double weight = 0.0;
};

// Continuous-index convention: u = (v - lo)/width - 0.5, so bin centers sit at
// integer u. The azimuth axis wraps; r and z clamp to the edge bins inside a
// half-bin grace band and return no taps beyond it (zero feature).
// Returns the number of taps (0 when the query is out of support).
int trilinear_taps(const GridSpec& spec, const PolarPoint& polar,
                   const CartPoint& cart, SampleTap taps[8]);

Array trilinear_sample(const FeatureVolume& vol, const PolarPoint& q);
Array trilinear_sample(const FeatureVolume& vol, const CartPoint& q);

// Resamples a feature volume onto the Cartesian output grid by evaluating
// every output voxel center.
FeatureVolume resample_to_cartesian(const FeatureVolume& vol,
                                    const CartesianGridSpec& out_spec);
// Gradient w.r.t. the source volume data, given d(output volume data).
Array resample_backward(const FeatureVolume& vol,
                        const CartesianGridSpec& out_spec, const Array& dout);

struct ClassifyResult {
  Array logits;  // [X, Y, Z, n_classes]
  SemanticGrid labels;
};

// Per-voxel linear classifier; argmax ties resolve to the lowest class index.
ClassifyResult classify(const FeatureVolume& cart, const HeadParams& params,
                        int n_classes);
void classify_backward(const FeatureVolume& cart, const HeadParams& params,
                       const Array& dlogits, Array& dfeatures,
                       Array& dclassifier, Array& dbias);

// Mean over voxels of the class-weighted negative log softmax probability of
// the target label. Writes dlogits when requested.
double cross_entropy_loss(const Array& logits, const SemanticGrid& target,
                          const std::vector<double>& class_weights,
                          Array* dlogits = nullptr);

}  // namespace pvo

#endif  // PVO_HEAD_HPP_
