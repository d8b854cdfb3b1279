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
#include "pvo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pvo/rng.hpp"

namespace pvo {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::array<int, 3>> default_schedule(const std::string& preset) {
  if (preset == "paper") return {{2, 2, 2}, {2, 2, 2}, {2, 2, 2}};
  if (preset == "tiny") return {{2, 2, 1}};
  return {{2, 2, 2}, {2, 2, 1}};  // desk: 64x84x10 -> 16x21x5
}

}  // namespace

ModelConfig ModelConfig::from_preset(const std::string& name) {
  ModelConfig cfg;
  cfg.preset = name;
  cfg.grids = grid_preset(name);
  cfg.schedule = default_schedule(name);
  if (name == "tiny") {
    cfg.channels = 3;
    cfg.fusion_mode = FusionMode::kFused;
    cfg.train.steps = 50;
    cfg.lidar.n_beams = 6;
    cfg.lidar.points_per_beam = 24;
  } else {
    // Sparse clouds keep the propagation problem nontrivial at desk scale;
    // the gentle fixed step suits the attention blocks.
    cfg.lidar.n_beams = 8;
    cfg.lidar.points_per_beam = 120;
    cfg.train.steps = 500;
    cfg.train.step_size = 2e-3;
  }
  return cfg;
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  ModelConfig cfg = from_preset(j.value("preset", std::string("desk")));
  if (j.contains("grid")) cfg.grids = grid_from_json(j.at("grid").dump());
  cfg.channels = j.value("channels", cfg.channels);
  cfg.n_classes = j.value("n_classes", cfg.n_classes);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.use_polar = j.value("polar", cfg.use_polar);
  if (j.contains("pdconv")) {
    const auto& p = j.at("pdconv");
    cfg.pd_enable = p.value("enable", cfg.pd_enable);
    if (p.contains("topology")) {
      cfg.pd_topology = pd_topology_from_string(p.at("topology"));
    }
  }
  if (j.contains("grp")) {
    const auto& g = j.at("grp");
    cfg.grp_enable = g.value("enable", cfg.grp_enable);
    cfg.grp_window = g.value("window_s", cfg.grp_window);
    cfg.grp_literal = g.value("literal_eq", cfg.grp_literal);
  }
  if (j.contains("fusion")) {
    const std::string mode = j.at("fusion").value("mode", "lidar_only");
    if (mode == "lidar_only") {
      cfg.fusion_mode = FusionMode::kLidarOnly;
    } else if (mode == "fused") {
      cfg.fusion_mode = FusionMode::kFused;
    } else {
      throw_config("fusion.mode must be lidar_only or fused, got '" + mode +
                   "'");
    }
  }
  if (j.contains("backbone") && j.at("backbone").contains("schedule")) {
    cfg.schedule.clear();
    for (const auto& st : j.at("backbone").at("schedule")) {
      cfg.schedule.push_back({st.at(0), st.at(1), st.at(2)});
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.step_size = t.value("step_size", cfg.train.step_size);
    cfg.train.steps = t.value("steps", cfg.train.steps);
    cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
  }
  if (j.contains("loss")) {
    cfg.free_class_weight =
        j.at("loss").value("free_weight", cfg.free_class_weight);
  }
  if (j.contains("stats")) {
    cfg.stats_bands = j.at("stats").value("bands", cfg.stats_bands);
  }
  if (j.contains("lidar")) {
    const auto& l = j.at("lidar");
    cfg.lidar.n_beams = l.value("beams", cfg.lidar.n_beams);
    cfg.lidar.points_per_beam =
        l.value("points_per_beam", cfg.lidar.points_per_beam);
  }
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_io("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["preset"] = preset;
  j["grid"] = nlohmann::json::parse(grid_to_json(grids));
  j["channels"] = channels;
  j["n_classes"] = n_classes;
  j["seed"] = seed;
  j["polar"] = use_polar;
  j["pdconv"] = {{"enable", pd_enable},
                 {"topology", pd_topology_to_string(pd_topology)}};
  j["grp"] = {{"enable", grp_enable},
              {"window_s", grp_window},
              {"literal_eq", grp_literal}};
  j["fusion"] = {
      {"mode", fusion_mode == FusionMode::kFused ? "fused" : "lidar_only"}};
  j["backbone"]["schedule"] = nlohmann::json::array();
  for (const auto& s : schedule) {
    j["backbone"]["schedule"].push_back({s[0], s[1], s[2]});
  }
  j["train"] = {{"step_size", train.step_size},
                {"steps", train.steps},
                {"weight_decay", train.weight_decay}};
  j["loss"] = {{"free_weight", free_class_weight}};
  j["stats"] = {{"bands", stats_bands}};
  j["lidar"] = {{"beams", lidar.n_beams},
                {"points_per_beam", lidar.points_per_beam}};
  return j.dump(2);
}

GridSpec ModelConfig::input_grid() const {
  if (use_polar) return grids.polar;
  return grids.cartesian_input;
}

ConvPadding ModelConfig::padding() const {
  return use_polar ? ConvPadding::polar() : ConvPadding::all_zero();
}

std::vector<double> ModelConfig::class_weights() const {
  std::vector<double> w(n_classes, 1.0);
  w[0] = free_class_weight;
  return w;
}

void ModelConfig::validate() const {
  if (channels < 1) throw_config("channels must be >= 1");
  if (n_classes < 2 || n_classes > kNumClasses) {
    throw_config("n_classes must be in [2, " + std::to_string(kNumClasses) +
                 "]");
  }
  if (grp_window < 1) throw_config("grp.window_s must be >= 1");
  backbone_output_extents(grid_bins(input_grid()), schedule);
}

DualArray& ParamStore::add(const std::string& name, Array init) {
  if (entries.count(name)) throw_config("duplicate parameter '" + name + "'");
  names.push_back(name);
  return entries.emplace(name, DualArray(std::move(init))).first->second;
}

DualArray& ParamStore::at(const std::string& name) {
  auto it = entries.find(name);
  if (it == entries.end()) throw_config("unknown parameter '" + name + "'");
  return it->second;
}

const DualArray& ParamStore::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw_config("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [_, d] : entries) d.zero_grad();
}

double ParamStore::grad_norm() const {
  double acc = 0.0;
  for (const auto& [_, d] : entries) {
    for (int64_t i = 0; i < d.grad.numel(); ++i) acc += d.grad[i] * d.grad[i];
  }
  return std::sqrt(acc);
}

int64_t ParamStore::param_count() const {
  int64_t n = 0;
  for (const auto& [_, d] : entries) n += d.value.numel();
  return n;
}

namespace {
constexpr char kCkptMagic[] = "PVOCKP1";
}

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_io("cannot open " + path + " for writing");
  os.write(kCkptMagic, 7);
  uint32_t n = static_cast<uint32_t>(names.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  for (const std::string& name : names) {
    uint32_t len = static_cast<uint32_t>(name.size());
    os.write(reinterpret_cast<const char*>(&len), 4);
    os.write(name.data(), len);
    write_array(os, entries.at(name).value);
  }
  if (!os) throw_io("checkpoint write failed for " + path);
}

void ParamStore::load_values(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open checkpoint " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, kCkptMagic, 7) != 0) {
    throw_io("bad checkpoint magic in " + path);
  }
  uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  if (n != names.size()) {
    throw_data("checkpoint holds " + std::to_string(n) + " tensors, expected " +
               std::to_string(names.size()));
  }
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw_io("checkpoint truncated");
    Array a = read_array(is);
    DualArray& slot = at(name);
    if (!slot.value.same_shape(a)) {
      throw_data("checkpoint tensor '" + name + "' has shape " + a.shape_str() +
                 ", expected " + slot.value.shape_str());
    }
    slot.value = std::move(a);
  }
}

namespace {

Array seeded_uniform(std::vector<int> shape, int fan_in, uint64_t seed,
                     const std::string& name) {
  Array a(std::move(shape));
  const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng = Rng::derive(seed, fnv1a(name));
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(-b, b);
  return a;
}

const std::array<const char*, 3> kAxialNames = {"axial_r", "axial_a", "axial_z"};

// Positional projections see offsets in meters (up to the grid's radial
// span), so their init is additionally scaled by 1/length so the ReLU bias
// starts at O(1) instead of saturating the attention softmax.
double grid_length_scale(const ModelConfig& cfg) {
  if (cfg.use_polar) return std::max(1.0, cfg.grids.polar.r_max);
  const auto& c = cfg.grids.cartesian_input;
  return std::max({1.0, c.x_max - c.x_min, c.y_max - c.y_min});
}

void add_projection(ParamStore& store, const ModelConfig& cfg,
                    const std::string& prefix) {
  const int C = cfg.channels;
  store.add(prefix + ".wq", seeded_uniform({C, C}, C, cfg.seed, prefix + ".wq"));
  store.add(prefix + ".wk", seeded_uniform({C, C}, C, cfg.seed, prefix + ".wk"));
  // The value projection feeds residual streams; a damped start keeps the
  // module near the identity until the propagation payoff is learned.
  Array wv = seeded_uniform({C, C}, C, cfg.seed, prefix + ".wv");
  for (int64_t i = 0; i < wv.numel(); ++i) wv[i] *= 0.1;
  store.add(prefix + ".wv", std::move(wv));
  Array wpos = seeded_uniform({5}, 5, cfg.seed, prefix + ".wpos");
  const double scale = 1.0 / grid_length_scale(cfg);
  for (int64_t i = 0; i < wpos.numel(); ++i) wpos[i] *= scale;
  store.add(prefix + ".wpos", std::move(wpos));
}

AttnProjection bind_projection(const ParamStore& store,
                               const std::string& prefix) {
  AttnProjection p;
  p.wq = store.at(prefix + ".wq").value;
  p.wk = store.at(prefix + ".wk").value;
  p.wv = store.at(prefix + ".wv").value;
  p.wpos = store.at(prefix + ".wpos").value;
  return p;
}

void accumulate_projection(ParamStore& store, const std::string& prefix,
                           const AttnProjection& g) {
  axpy(1.0, g.wq, store.at(prefix + ".wq").grad);
  axpy(1.0, g.wk, store.at(prefix + ".wk").grad);
  axpy(1.0, g.wv, store.at(prefix + ".wv").grad);
  axpy(1.0, g.wpos, store.at(prefix + ".wpos").grad);
}

std::string block_name(size_t i) { return "backbone.block" + std::to_string(i); }

BackboneParams bind_backbone(const ParamStore& store, const ModelConfig& cfg) {
  BackboneParams p;
  p.stem = store.at("backbone.stem").value;
  for (size_t i = 0; i < cfg.schedule.size(); ++i) {
    PdBlockParams b;
    if (cfg.pd_enable) {
      b.k_r = store.at(block_name(i) + ".k_r").value;
      b.k_a = store.at(block_name(i) + ".k_a").value;
      b.k_z = store.at(block_name(i) + ".k_z").value;
    } else {
      b.k3 = store.at(block_name(i) + ".k3").value;
    }
    p.blocks.push_back(std::move(b));
  }
  return p;
}

BackboneParams zero_backbone_grads(const ModelConfig& cfg,
                                   const BackboneParams& like) {
  BackboneParams g;
  g.stem = Array(like.stem.shape());
  for (const auto& b : like.blocks) {
    PdBlockParams z;
    if (cfg.pd_enable) {
      z.k_r = Array(b.k_r.shape());
      z.k_a = Array(b.k_a.shape());
      z.k_z = Array(b.k_z.shape());
    } else {
      z.k3 = Array(b.k3.shape());
    }
    g.blocks.push_back(std::move(z));
  }
  return g;
}

GrpParams bind_grp(const ParamStore& store, const ModelConfig& cfg) {
  GrpParams p = make_grp_params(cfg.channels, cfg.grp_window);
  p.literal_eq = cfg.grp_literal;
  p.condense = bind_projection(store, "grp.condense");
  for (int i = 0; i < 3; ++i) {
    p.axial[i] = bind_projection(store, std::string("grp.") + kAxialNames[i]);
  }
  p.reverse = bind_projection(store, "grp.reverse");
  return p;
}

FusionParams bind_fusion(const ParamStore& store) {
  FusionParams p;
  p.gate_kernel = store.at("fusion.gate_kernel").value;
  p.gate_proj = store.at("fusion.gate_proj").value;
  p.gate_bias = store.at("fusion.gate_bias").value;
  return p;
}

HeadParams bind_head(const ParamStore& store) {
  HeadParams p;
  p.classifier = store.at("head.weight").value;
  p.bias = store.at("head.bias").value;
  return p;
}

// Grid spec of the backbone output: same ranges, extents divided by the
// cumulative stride.
GridSpec downsampled_spec(const GridSpec& spec,
                          const std::vector<std::array<int, 3>>& schedule) {
  std::array<int, 3> div = {1, 1, 1};
  for (const auto& s : schedule) {
    for (int ax = 0; ax < 3; ++ax) div[ax] *= s[ax];
  }
  if (const auto* p = std::get_if<PolarGridSpec>(&spec)) {
    PolarGridSpec out = *p;
    out.bins_r /= div[0];
    out.bins_a /= div[1];
    out.bins_z /= div[2];
    return out;
  }
  CartesianGridSpec out = std::get<CartesianGridSpec>(spec);
  out.bins_x /= div[0];
  out.bins_y /= div[1];
  out.bins_z /= div[2];
  return out;
}

}  // namespace

ParamStore make_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamStore store;
  const int C = cfg.channels;
  const int vc = kVoxelFeatureChannels;

  if (cfg.fusion_mode == FusionMode::kFused) {
    store.add("fusion.gate_kernel",
              seeded_uniform({3, 3, 3, 2 * vc, C}, 27 * 2 * vc, cfg.seed,
                             "fusion.gate_kernel"));
    store.add("fusion.gate_proj",
              seeded_uniform({C}, C, cfg.seed, "fusion.gate_proj"));
    store.add("fusion.gate_bias",
              seeded_uniform({1}, C, cfg.seed, "fusion.gate_bias"));
  }

  store.add("backbone.stem",
            seeded_uniform({1, 1, 1, vc, C}, vc, cfg.seed, "backbone.stem"));
  for (size_t i = 0; i < cfg.schedule.size(); ++i) {
    const std::string base = block_name(i);
    if (cfg.pd_enable) {
      store.add(base + ".k_r",
                seeded_uniform({1, 3, 3, C, C}, 9 * C, cfg.seed, base + ".k_r"));
      store.add(base + ".k_a",
                seeded_uniform({3, 1, 3, C, C}, 9 * C, cfg.seed, base + ".k_a"));
      store.add(base + ".k_z",
                seeded_uniform({3, 3, 1, C, C}, 9 * C, cfg.seed, base + ".k_z"));
    } else {
      store.add(base + ".k3", seeded_uniform({3, 3, 3, C, C}, 27 * C, cfg.seed,
                                             base + ".k3"));
    }
  }

  if (cfg.grp_enable) {
    add_projection(store, cfg, "grp.condense");
    for (const char* ax : kAxialNames) {
      add_projection(store, cfg, std::string("grp.") + ax);
    }
    add_projection(store, cfg, "grp.reverse");
  }

  store.add("head.weight", seeded_uniform({C, cfg.n_classes}, C, cfg.seed,
                                          "head.weight"));
  store.add("head.bias",
            seeded_uniform({cfg.n_classes}, C, cfg.seed, "head.bias"));
  return store;
}

ForwardResult pipeline_forward(const ModelConfig& cfg, const ParamStore& params,
                               const PointCloud& cloud,
                               const FeatureVolume* camera,
                               PipelineCache* cache) {
  cfg.validate();
  const GridSpec in_grid = cfg.input_grid();
  const ConvPadding pad = cfg.padding();

  PipelineCache local;
  PipelineCache& c = cache ? *cache : local;

  VoxelizeResult vox = voxelize_points(cloud, in_grid);
  c.f_lidar = std::move(vox.volume);

  if (cfg.fusion_mode == FusionMode::kFused) {
    if (!camera) {
      throw_config("fusion.mode=fused requires a camera feature volume");
    }
    if (!camera->data.same_shape(c.f_lidar.data)) {
      throw_config("camera volume extents " + camera->data.shape_str() +
                   " do not match the input grid " +
                   c.f_lidar.data.shape_str());
    }
    c.f_camera = *camera;
    c.fused = modal_fuse(c.f_lidar, c.f_camera, bind_fusion(params), pad,
                         &c.fusion);
  } else {
    c.fused = c.f_lidar;
  }

  BackboneConfig bb_cfg;
  bb_cfg.block.topology = cfg.pd_enable ? cfg.pd_topology : PdTopology::kNaive;
  bb_cfg.schedule = cfg.schedule;
  Array bb_out = backbone_forward(c.fused.data, bind_backbone(params, cfg),
                                  bb_cfg, pad, &c.backbone);

  c.backbone_out.spec = downsampled_spec(in_grid, cfg.schedule);
  c.backbone_out.channels = cfg.channels;
  c.backbone_out.data = std::move(bb_out);

  if (cfg.grp_enable) {
    c.final_volume = grp_forward(c.backbone_out, bind_grp(params, cfg), &c.grp);
  } else {
    c.final_volume = c.backbone_out;
  }

  // Identity aggregation, then the occupancy head.
  c.cart = resample_to_cartesian(c.final_volume, cfg.grids.cartesian);
  ClassifyResult cls = classify(c.cart, bind_head(params), cfg.n_classes);

  ForwardResult res;
  res.logits = std::move(cls.logits);
  res.labels = std::move(cls.labels);
  res.dropped_points = vox.dropped;
  return res;
}

void pipeline_backward(const ModelConfig& cfg, ParamStore& params,
                       const PipelineCache& cache, const Array& dlogits,
                       Array* dcamera) {
  const ConvPadding pad = cfg.padding();

  // Head.
  Array dcart(cache.cart.data.shape());
  classify_backward(cache.cart, bind_head(params), dlogits, dcart,
                    params.at("head.weight").grad, params.at("head.bias").grad);

  // Trilinear resampling.
  Array dfinal =
      resample_backward(cache.final_volume, cfg.grids.cartesian, dcart);

  // GRP.
  Array dbackbone;
  if (cfg.grp_enable) {
    dbackbone = Array(cache.backbone_out.data.shape());
    GrpParams grads = make_grp_params(cfg.channels, cfg.grp_window);
    grp_backward(cache.backbone_out, bind_grp(params, cfg), cache.grp, dfinal,
                 dbackbone, grads);
    accumulate_projection(params, "grp.condense", grads.condense);
    for (int i = 0; i < 3; ++i) {
      accumulate_projection(params, std::string("grp.") + kAxialNames[i],
                            grads.axial[i]);
    }
    accumulate_projection(params, "grp.reverse", grads.reverse);
  } else {
    dbackbone = dfinal;
  }

  // Backbone.
  BackboneConfig bb_cfg;
  bb_cfg.block.topology = cfg.pd_enable ? cfg.pd_topology : PdTopology::kNaive;
  bb_cfg.schedule = cfg.schedule;
  BackboneParams bb = bind_backbone(params, cfg);
  BackboneParams bb_grads = zero_backbone_grads(cfg, bb);
  Array dfused(cache.fused.data.shape());
  backbone_backward(cache.fused.data, bb, bb_cfg, pad, cache.backbone,
                    dbackbone, dfused, bb_grads);
  axpy(1.0, bb_grads.stem, params.at("backbone.stem").grad);
  for (size_t i = 0; i < cfg.schedule.size(); ++i) {
    if (cfg.pd_enable) {
      axpy(1.0, bb_grads.blocks[i].k_r, params.at(block_name(i) + ".k_r").grad);
      axpy(1.0, bb_grads.blocks[i].k_a, params.at(block_name(i) + ".k_a").grad);
      axpy(1.0, bb_grads.blocks[i].k_z, params.at(block_name(i) + ".k_z").grad);
    } else {
      axpy(1.0, bb_grads.blocks[i].k3, params.at(block_name(i) + ".k3").grad);
    }
  }

  // Fusion (the voxelizer has no gradient path).
  if (cfg.fusion_mode == FusionMode::kFused) {
    FusionParams fp = bind_fusion(params);
    FusionParams fg = make_fusion_params(cache.f_lidar.channels,
                                         fp.gate_proj.extent(0));
    Array dlidar(cache.f_lidar.data.shape());
    Array dcam(cache.f_camera.data.shape());
    modal_fuse_backward(cache.f_lidar, cache.f_camera, fp, pad, cache.fusion,
                        dfused, dlidar, dcam, fg);
    axpy(1.0, fg.gate_kernel, params.at("fusion.gate_kernel").grad);
    axpy(1.0, fg.gate_proj, params.at("fusion.gate_proj").grad);
    axpy(1.0, fg.gate_bias, params.at("fusion.gate_bias").grad);
    if (dcamera) *dcamera = std::move(dcam);
  } else if (dcamera) {
    *dcamera = Array({1});
  }
}

std::vector<Scene> make_scenes(const ModelConfig& cfg, int n, uint64_t seed0) {
  std::vector<Scene> scenes;
  scenes.reserve(n);
  for (int i = 0; i < n; ++i) {
    Scene s;
    s.spec = make_random_scene(seed0 + i, cfg.grids.cartesian);
    s.cloud = simulate_lidar(s.spec, cfg.lidar, s.spec.seed);
    s.truth = rasterize_truth(s.spec, cfg.grids.cartesian);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

FeatureVolume camera_for_scene(const ModelConfig& cfg, const SceneSpec& scene) {
  return synthesize_camera_volume(scene, cfg.input_grid(),
                                  kVoxelFeatureChannels, scene.seed);
}

std::vector<StepLog> train(const ModelConfig& cfg,
                           const std::vector<Scene>& scenes,
                           ParamStore& params) {
  if (scenes.empty()) throw_config("train needs at least one scene");
  const bool fused = cfg.fusion_mode == FusionMode::kFused;
  std::vector<FeatureVolume> cameras;
  if (fused) {
    cameras.reserve(scenes.size());
    for (const Scene& s : scenes) cameras.push_back(camera_for_scene(cfg, s.spec));
  }

  // Adam moments in registration order.
  std::vector<Array> m, v;
  for (const std::string& name : params.names) {
    m.emplace_back(params.at(name).value.shape());
    v.emplace_back(params.at(name).value.shape());
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const std::vector<double> weights = cfg.class_weights();

  std::vector<StepLog> log;
  log.reserve(cfg.train.steps);
  for (int step = 0; step < cfg.train.steps; ++step) {
    const size_t si = step % scenes.size();
    PipelineCache cache;
    ForwardResult fwd =
        pipeline_forward(cfg, params, scenes[si].cloud,
                         fused ? &cameras[si] : nullptr, &cache);
    Array dlogits;
    const double loss =
        cross_entropy_loss(fwd.logits, scenes[si].truth, weights, &dlogits);
    if (!std::isfinite(loss)) {
      throw_numeric("training aborted: non-finite loss at step " +
                    std::to_string(step));
    }
    params.zero_grads();
    pipeline_backward(cfg, params, cache, dlogits);
    const double gnorm = params.grad_norm();

    const double t = step + 1;
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);
    for (size_t pi = 0; pi < params.names.size(); ++pi) {
      DualArray& d = params.at(params.names[pi]);
      for (int64_t i = 0; i < d.value.numel(); ++i) {
        const double g = d.grad[i];
        m[pi][i] = b1 * m[pi][i] + (1.0 - b1) * g;
        v[pi][i] = b2 * v[pi][i] + (1.0 - b2) * g * g;
        const double mhat = m[pi][i] / bc1;
        const double vhat = v[pi][i] / bc2;
        d.value[i] -= cfg.train.step_size *
                      (mhat / (std::sqrt(vhat) + eps) +
                       cfg.train.weight_decay * d.value[i]);
      }
    }
    log.push_back({step, loss, gnorm});
  }
  return log;
}

EvalResult evaluate(const ModelConfig& cfg, const ParamStore& params,
                    const std::vector<Scene>& scenes) {
  EvalResult res;
  res.table = ConfusionTable(cfg.n_classes);
  std::vector<ConfusionTable> band_tables(cfg.stats_bands,
                                          ConfusionTable(cfg.n_classes));
  const bool fused = cfg.fusion_mode == FusionMode::kFused;
  for (const Scene& s : scenes) {
    FeatureVolume cam;
    if (fused) cam = camera_for_scene(cfg, s.spec);
    ForwardResult fwd =
        pipeline_forward(cfg, params, s.cloud, fused ? &cam : nullptr);
    accumulate(fwd.labels, s.truth, res.table);
    accumulate_banded(fwd.labels, s.truth, band_tables);
  }
  res.bands = bands_from_tables(band_tables, cfg.grids.cartesian);
  return res;
}

std::string GradcheckReport::to_json() const {
  nlohmann::json j;
  j["pass"] = pass;
  j["worst"] = worst;
  j["tolerance"] = tolerance;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}});
  }
  return j.dump(2);
}

GradcheckReport gradcheck_all(const ModelConfig& cfg, uint64_t seed) {
  ParamStore store = make_params(cfg);
  const bool fused = cfg.fusion_mode == FusionMode::kFused;

  // Synthetic fixture: a seeded cloud inside the grid, a random camera volume
  // and random target labels.
  Rng rng = Rng::derive(seed, 0x9cadc);
  PointCloud cloud;
  const auto& pg = cfg.grids.polar;
  for (int i = 0; i < 60; ++i) {
    const PolarPoint p{rng.uniform(pg.r_min, 0.95 * pg.r_max),
                       rng.uniform(-M_PI, M_PI),
                       rng.uniform(pg.z_min, pg.z_max)};
    const CartPoint c = polar_to_cart(p);
    cloud.points.push_back(
        PointCloud::make_point(c.x, c.y, c.z, rng.next_double()));
  }
  FeatureVolume camera =
      FeatureVolume::zeros(cfg.input_grid(), kVoxelFeatureChannels);
  for (int64_t i = 0; i < camera.data.numel(); ++i) {
    camera.data[i] = rng.uniform(-1.0, 1.0);
  }
  SemanticGrid truth = SemanticGrid::zeros(cfg.grids.cartesian, cfg.n_classes);
  for (auto& l : truth.labels) {
    l = static_cast<uint16_t>(rng.uniform_int(0, cfg.n_classes - 1));
  }
  const std::vector<double> weights = cfg.class_weights();

  auto loss_of = [&]() {
    ForwardResult fwd = pipeline_forward(cfg, store, cloud,
                                         fused ? &camera : nullptr);
    return cross_entropy_loss(fwd.logits, truth, weights);
  };

  // Analytic gradients.
  PipelineCache cache;
  ForwardResult fwd =
      pipeline_forward(cfg, store, cloud, fused ? &camera : nullptr, &cache);
  Array dlogits;
  cross_entropy_loss(fwd.logits, truth, weights, &dlogits);
  store.zero_grads();
  Array dcamera;
  pipeline_backward(cfg, store, cache, dlogits, fused ? &dcamera : nullptr);

  GradcheckReport report;
  // Central differences have a per-element sweet spot: a small step keeps
  // ReLU/maxsel kinks out of the stencil, a larger one keeps roundoff
  // (eps*|loss|/2h) below the 1e-8 relative-error floor on near-zero
  // gradients (blind-zone camera voxels, saturated paths). An element passes
  // when either step confirms the analytic value; a wrong backward fails
  // both, since both estimate the true derivative within their own noise.
  auto check_array = [&](const std::string& name, Array& value,
                         const Array& analytic) {
    double worst = 0.0;
    auto fd_at = [&](int64_t i, double h_scale) {
      const double x0 = value[i];
      const double h = h_scale * std::max(1.0, std::abs(x0));
      value[i] = x0 + h;
      const double fp = loss_of();
      value[i] = x0 - h;
      const double fm = loss_of();
      value[i] = x0;
      return (fp - fm) / (2.0 * h);
    };
    auto rel = [&](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
    };
    for (int64_t i = 0; i < value.numel(); ++i) {
      double err = rel(analytic[i], fd_at(i, 1e-4));
      if (err > 0.5 * report.tolerance) {
        err = std::min(err, rel(analytic[i], fd_at(i, 1e-3)));
      }
      worst = std::max(worst, err);
    }
    report.entries.push_back({name, worst});
  };

  for (const std::string& name : store.names) {
    DualArray& d = store.at(name);
    Array analytic = d.grad;  // keep a copy; closure recomputes forward only
    check_array(name, d.value, analytic);
  }
  if (fused) check_array("input.camera", camera.data, dcamera);

  for (const auto& e : report.entries) {
    report.worst = std::max(report.worst, e.max_rel_error);
  }
  report.pass = report.worst <= report.tolerance;
  return report;
}

std::vector<AblateRow> ablate(const ModelConfig& base,
                              const std::vector<Scene>& train_scenes,
                              const std::vector<Scene>& val_scenes) {
  const bool toggles[5][3] = {{false, false, false},
                              {true, false, false},
                              {true, true, false},
                              {true, false, true},
                              {true, true, true}};
  std::vector<AblateRow> rows;
  for (const auto& t : toggles) {
    ModelConfig cfg = base;
    cfg.use_polar = t[0];
    cfg.grp_enable = t[1];
    cfg.pd_enable = t[2];
    ParamStore params = make_params(cfg);
    train(cfg, train_scenes, params);
    EvalResult ev = evaluate(cfg, params, val_scenes);
    AblateRow row;
    row.polar = t[0];
    row.grp = t[1];
    row.pd = t[2];
    row.iou = geometric_iou(ev.table);
    row.miou = mean_iou(ev.table).miou;
    rows.push_back(row);
  }
  return rows;
}

std::string ablate_markdown(const std::vector<AblateRow>& rows) {
  std::string out = "| Polar | GRP | PD-Conv | IoU/mIoU(%) |\n";
  out += "|:-:|:-:|:-:|:-:|\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %.1f/%.1f |\n",
                  r.polar ? "x" : " ", r.grp ? "x" : " ", r.pd ? "x" : " ",
                  100.0 * r.iou, 100.0 * r.miou);
    out += buf;
  }
  return out;
}

std::string ablate_json(const std::vector<AblateRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"polar", r.polar},
                 {"grp", r.grp},
                 {"pdconv", r.pd},
                 {"iou", r.iou},
                 {"miou", r.miou}});
  }
  return j.dump(2);
}

ParamReport pd_param_report(const ModelConfig& cfg) {
  ParamReport rep;
  const auto bins = grid_bins(cfg.input_grid());
  PdStackConfig decomposed{cfg.pd_enable ? cfg.pd_topology : PdTopology::kA,
                           false};
  if (decomposed.topology == PdTopology::kNaive) {
    decomposed.topology = PdTopology::kA;
  }
  PdStackConfig naive{PdTopology::kNaive, false};
  const auto d = pd_block_stats(decomposed, cfg.channels, cfg.channels, bins);
  const auto n = pd_block_stats(naive, cfg.channels, cfg.channels, bins);
  rep.decomposed_params = d.params;
  rep.full3d_params = n.params;
  rep.decomposed_multiplies = d.multiplies;
  rep.full3d_multiplies = n.multiplies;
  return rep;
}

}  // namespace pvo
