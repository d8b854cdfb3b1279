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
#ifndef PVO_PIPELINE_HPP_
#define PVO_PIPELINE_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pvo/fusion.hpp"
#include "pvo/grp.hpp"
#include "pvo/head.hpp"
#include "pvo/metrics.hpp"
#include "pvo/pdconv.hpp"
#include "pvo/synth.hpp"

namespace pvo {

struct TrainConfig {
  double step_size = 3e-3;
  int steps = 200;
  double weight_decay = 0.01;
};

enum class FusionMode { kLidarOnly, kFused };

struct ModelConfig {
  std::string preset = "desk";
  GridPreset grids;
  int channels = 8;
  int n_classes = kNumClasses;
  uint64_t seed = 1;
  bool use_polar = true;
  bool pd_enable = true;
  PdTopology pd_topology = PdTopology::kA;
  bool grp_enable = true;
  int grp_window = 2;
  bool grp_literal = false;
  FusionMode fusion_mode = FusionMode::kLidarOnly;
  std::vector<std::array<int, 3>> schedule;
  TrainConfig train;
  double free_class_weight = 0.2;
  int stats_bands = 5;
  LidarParams lidar;

  static ModelConfig from_preset(const std::string& name);
  static ModelConfig from_json(const std::string& json_text);
  static ModelConfig load(const std::string& path);
  std::string to_json() const;

  GridSpec input_grid() const;
  ConvPadding padding() const;
  std::vector<double> class_weights() const;
  void validate() const;
};

// Named learnable tensors with matching gradient slots. Iteration order is
// the registration order and is part of the determinism contract.
struct ParamStore {
  std::vector<std::string> names;
  std::map<std::string, DualArray> entries;

  DualArray& add(const std::string& name, Array init);
  DualArray& at(const std::string& name);
  const DualArray& at(const std::string& name) const;
  bool has(const std::string& name) const { return entries.count(name) > 0; }
  void zero_grads();
  double grad_norm() const;
  int64_t param_count() const;

  // Container "PVOCKP1": u32 entry count, then per entry u32 name length,
  // name bytes, and the array in the flat binary format.
  void save(const std::string& path) const;
  void load_values(const std::string& path);  // names must match
};

// Registers and initializes every parameter the config requires
// (uniform in [-b, b], b = 1/sqrt(fan_in), per-name derived streams).
ParamStore make_params(const ModelConfig& cfg);

struct PipelineCache {
  FeatureVolume f_lidar;
  FeatureVolume f_camera;
  FusionCache fusion;
  FeatureVolume fused;
  BackboneCache backbone;
  FeatureVolume backbone_out;
  GrpCache grp;
  FeatureVolume final_volume;
  FeatureVolume cart;
};

struct ForwardResult {
  Array logits;  // [X, Y, Z, n_classes]
  SemanticGrid labels;
  int64_t dropped_points = 0;
};

// voxelize -> [fuse] -> PD-Conv backbone -> [GRP] -> identity aggregation ->
// trilinear resampling -> classifier. `camera` may be null in LiDAR-only mode.
ForwardResult pipeline_forward(const ModelConfig& cfg, const ParamStore& params,
                               const PointCloud& cloud,
                               const FeatureVolume* camera,
                               PipelineCache* cache = nullptr);

// Accumulates parameter gradients into the store; optionally returns the
// gradient w.r.t. the camera volume (fused mode only).
void pipeline_backward(const ModelConfig& cfg, ParamStore& params,
                       const PipelineCache& cache, const Array& dlogits,
                       Array* dcamera = nullptr);

struct Scene {
  SceneSpec spec;
  PointCloud cloud;
  SemanticGrid truth;
};

// Generates n scenes (spec + simulated cloud + rasterized truth) from
// consecutive seeds.
std::vector<Scene> make_scenes(const ModelConfig& cfg, int n, uint64_t seed0);

// Camera volume on the config's input grid, derived from the scene seed.
FeatureVolume camera_for_scene(const ModelConfig& cfg, const SceneSpec& scene);

struct StepLog {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

// Adaptive-moment descent with decoupled weight decay and a fixed step size,
// cycling through the scenes. Aborts on a non-finite loss.
std::vector<StepLog> train(const ModelConfig& cfg, const std::vector<Scene>& scenes,
                           ParamStore& params);

struct EvalResult {
  ConfusionTable table{1};
  std::vector<BandIou> bands;
};

EvalResult evaluate(const ModelConfig& cfg, const ParamStore& params,
                    const std::vector<Scene>& scenes);

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;  // one per named parameter + inputs
  double worst = 0.0;
  bool pass = false;
  double tolerance = 1e-4;
  std::string to_json() const;
};

// Full-pipeline analytic-vs-central-differences comparison on a tiny
// fixed-seed instance; covers every named parameter plus the camera input.
GradcheckReport gradcheck_all(const ModelConfig& cfg, uint64_t seed);

struct AblateRow {
  bool polar = false, grp = false, pd = false;
  double iou = 0.0, miou = 0.0;
};

// The five component-toggle rows in the ablation-table order:
// none, polar, polar+GRP, polar+PD, polar+GRP+PD. Every row trains with the
// same seed and budget and evaluates on the validation scenes.
std::vector<AblateRow> ablate(const ModelConfig& base,
                              const std::vector<Scene>& train_scenes,
                              const std::vector<Scene>& val_scenes);

std::string ablate_markdown(const std::vector<AblateRow>& rows);
std::string ablate_json(const std::vector<AblateRow>& rows);

// Parameter/multiply counts of one decomposed block vs the full 3x3x3
// baseline at the given channel width (equal by construction for Cin==Cout).
struct ParamReport {
  int64_t decomposed_params = 0;
  int64_t full3d_params = 0;
  int64_t decomposed_multiplies = 0;
  int64_t full3d_multiplies = 0;
};
ParamReport pd_param_report(const ModelConfig& cfg);

}  // namespace pvo

#endif  // PVO_PIPELINE_HPP_
