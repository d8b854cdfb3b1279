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
#include "pvo/pvo.h"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "pvo/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

thread_local std::string g_last_error;

[[noreturn]] void usage_null() {
  throw pvo::Error(pvo::ErrorKind::kUsage, "null argument");
}

int map_error(const pvo::Error& e) {
  g_last_error = e.what();
  switch (e.kind()) {
    case pvo::ErrorKind::kConfig:
    case pvo::ErrorKind::kData:
    case pvo::ErrorKind::kIo:
    case pvo::ErrorKind::kUsage:
      return PVO_ERR_USAGE;
    default:
      return PVO_ERR_INTERNAL;
  }
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const pvo::Error& e) {
    return map_error(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PVO_ERR_INTERNAL;
  }
}

std::string index_name(const char* stem, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, i, ext);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) pvo::throw_io("cannot open " + tmp.string() + " for writing");
    os << text;
    if (!os) pvo::throw_io("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

class ManifestWriter {
 public:
  ManifestWriter(const std::string& command, const pvo::ModelConfig& cfg)
      : start_(std::chrono::steady_clock::now()) {
    j_["command"] = command;
    j_["seed"] = cfg.seed;
    j_["tool_version"] = kVersion;
    j_["inputs"] = nlohmann::json::array();
    j_["outputs"] = nlohmann::json::array();
  }
  void input(const std::string& p) { j_["inputs"].push_back(p); }
  void output(const std::string& p) { j_["outputs"].push_back(p); }
  void set(const std::string& key, const nlohmann::json& v) { j_[key] = v; }

  // Written atomically next to the outputs; the only artifact carrying
  // timing, so everything else stays byte-reproducible.
  void commit(const fs::path& out) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    j_["wall_time_s"] = secs;
    fs::path path = out;
    if (fs::is_directory(out)) {
      path = out / "manifest.json";
    } else {
      path = out.string() + ".manifest.json";
    }
    write_text_atomic(path, j_.dump(2) + "\n");
  }

 private:
  nlohmann::json j_;
  std::chrono::steady_clock::time_point start_;
};

struct LoadedScene {
  pvo::Scene scene;
  bool has_camera_file = false;
  std::string camera_path;
};

std::vector<LoadedScene> load_dataset(const pvo::ModelConfig& cfg,
                                      const std::string& dir) {
  if (!fs::is_directory(dir)) {
    pvo::throw_io("data directory not found: " + dir);
  }
  std::vector<LoadedScene> out;
  for (int i = 0;; ++i) {
    const fs::path scene_path = fs::path(dir) / index_name("scene", i, "json");
    if (!fs::exists(scene_path)) break;
    LoadedScene ls;
    ls.scene.spec = pvo::SceneSpec::load(scene_path.string());
    const fs::path cloud = fs::path(dir) / index_name("cloud", i, "csv");
    if (!fs::exists(cloud)) {
      pvo::throw_data("missing point cloud file " + cloud.string());
    }
    ls.scene.cloud = pvo::PointCloud::load_csv(cloud.string());
    const fs::path truth = fs::path(dir) / index_name("truth", i, "sem");
    if (!fs::exists(truth)) {
      pvo::throw_data("missing truth grid file " + truth.string());
    }
    ls.scene.truth = pvo::SemanticGrid::load(truth.string(), cfg.n_classes);
    // The container stores extents only; ranges come from the config.
    if (ls.scene.truth.spec.bins_x != cfg.grids.cartesian.bins_x ||
        ls.scene.truth.spec.bins_y != cfg.grids.cartesian.bins_y ||
        ls.scene.truth.spec.bins_z != cfg.grids.cartesian.bins_z) {
      pvo::throw_data("truth grid extents in " + truth.string() +
                      " do not match the configured output grid");
    }
    ls.scene.truth.spec = cfg.grids.cartesian;
    ls.scene.truth.validate();
    const fs::path cam = fs::path(dir) / index_name("camera", i, "arr");
    if (fs::exists(cam)) {
      ls.has_camera_file = true;
      ls.camera_path = cam.string();
    }
    out.push_back(std::move(ls));
  }
  if (out.empty()) {
    pvo::throw_data("no scenes (scene_0000.json ...) found in " + dir);
  }
  return out;
}

// Uses the stored camera volume when its extents match the config's input
// grid; otherwise synthesizes it from the scene seed (grids may differ
// between ablation rows).
pvo::FeatureVolume camera_for(const pvo::ModelConfig& cfg,
                              const LoadedScene& ls) {
  if (ls.has_camera_file) {
    pvo::Array a = pvo::load_array(ls.camera_path);
    const auto bins = pvo::grid_bins(cfg.input_grid());
    if (a.rank() == 4 && a.extent(0) == bins[0] && a.extent(1) == bins[1] &&
        a.extent(2) == bins[2]) {
      pvo::FeatureVolume v;
      v.spec = cfg.input_grid();
      v.channels = a.extent(3);
      v.data = std::move(a);
      v.mask.assign(static_cast<size_t>(bins[0]) * bins[1] * bins[2], 0);
      return v;
    }
  }
  return pvo::camera_for_scene(cfg, ls.scene.spec);
}

std::vector<pvo::Scene> strip(const std::vector<LoadedScene>& in) {
  std::vector<pvo::Scene> out;
  out.reserve(in.size());
  for (const auto& ls : in) out.push_back(ls.scene);
  return out;
}

}  // namespace

struct pvo_config {
  pvo::ModelConfig cfg;
  int threads = 1;
};

struct pvo_array {
  pvo::Array a;
};

extern "C" {

const char* pvo_version(void) { return kVersion; }

const char* pvo_last_error(void) { return g_last_error.c_str(); }

void pvo_string_free(char* s) { std::free(s); }

int pvo_config_create_preset(const char* name, pvo_config** out) {
  return guarded([&] {
    if (!name || !out) usage_null();
    *out = new pvo_config{pvo::ModelConfig::from_preset(name), 1};
    return PVO_OK;
  });
}

int pvo_config_create_from_file(const char* path, pvo_config** out) {
  return guarded([&] {
    if (!path || !out) usage_null();
    *out = new pvo_config{pvo::ModelConfig::load(path), 1};
    return PVO_OK;
  });
}

int pvo_config_create_from_json(const char* json_text, pvo_config** out) {
  return guarded([&] {
    if (!json_text || !out) usage_null();
    *out = new pvo_config{pvo::ModelConfig::from_json(json_text), 1};
    return PVO_OK;
  });
}

void pvo_config_destroy(pvo_config* cfg) { delete cfg; }

int pvo_config_set_seed(pvo_config* cfg, uint64_t seed) {
  return guarded([&] {
    if (!cfg) usage_null();
    cfg->cfg.seed = seed;
    return PVO_OK;
  });
}

int pvo_config_set_threads(pvo_config* cfg, int threads) {
  return guarded([&] {
    if (!cfg) usage_null();
    if (threads < 1) {
      pvo::throw_config("threads must be >= 1");
    }
    // Caps the worker count; all kernels currently run single-threaded, which
    // trivially satisfies the determinism contract.
    cfg->threads = threads;
    return PVO_OK;
  });
}

int pvo_config_to_json(const pvo_config* cfg, char** out_json) {
  return guarded([&] {
    if (!cfg || !out_json) usage_null();
    const std::string s = cfg->cfg.to_json();
    *out_json = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(*out_json, s.c_str(), s.size() + 1);
    return PVO_OK;
  });
}

int pvo_array_create(const uint32_t* shape, uint32_t rank, pvo_array** out) {
  return guarded([&] {
    if (!shape || !out) usage_null();
    std::vector<int> s(shape, shape + rank);
    *out = new pvo_array{pvo::Array(s)};
    return PVO_OK;
  });
}

int pvo_array_load(const char* path, pvo_array** out) {
  return guarded([&] {
    if (!path || !out) usage_null();
    *out = new pvo_array{pvo::load_array(path)};
    return PVO_OK;
  });
}

int pvo_array_save(const pvo_array* a, const char* path) {
  return guarded([&] {
    if (!a || !path) usage_null();
    pvo::save_array(path, a->a);
    return PVO_OK;
  });
}

void pvo_array_destroy(pvo_array* a) { delete a; }

uint32_t pvo_array_rank(const pvo_array* a) {
  return a ? static_cast<uint32_t>(a->a.rank()) : 0;
}

uint32_t pvo_array_extent(const pvo_array* a, uint32_t axis) {
  if (!a || axis >= static_cast<uint32_t>(a->a.rank())) return 0;
  return static_cast<uint32_t>(a->a.extent(axis));
}

int64_t pvo_array_numel(const pvo_array* a) { return a ? a->a.numel() : 0; }

double* pvo_array_data(pvo_array* a) { return a ? a->a.data() : nullptr; }

int pvo_cmd_synth(const pvo_config* cfg, int n_scenes, const char* out_dir) {
  return guarded([&] {
    if (!cfg || !out_dir) usage_null();
    if (n_scenes < 0) pvo::throw_config("synth: scene count must be >= 0");
    const pvo::ModelConfig& c = cfg->cfg;
    ManifestWriter manifest("synth", c);
    fs::create_directories(out_dir);
    std::vector<pvo::Scene> scenes = pvo::make_scenes(c, n_scenes, c.seed);
    for (int i = 0; i < n_scenes; ++i) {
      const fs::path dir(out_dir);
      const std::string scene_p = (dir / index_name("scene", i, "json")).string();
      const std::string cloud_p = (dir / index_name("cloud", i, "csv")).string();
      const std::string truth_p = (dir / index_name("truth", i, "sem")).string();
      const std::string cam_p = (dir / index_name("camera", i, "arr")).string();
      scenes[i].spec.save(scene_p);
      scenes[i].cloud.save_csv(cloud_p);
      scenes[i].truth.save(truth_p);
      pvo::save_array(cam_p,
                      pvo::camera_for_scene(c, scenes[i].spec).data);
      manifest.output(scene_p);
      manifest.output(cloud_p);
      manifest.output(truth_p);
      manifest.output(cam_p);
    }
    manifest.commit(out_dir);
    return PVO_OK;
  });
}

int pvo_cmd_run(const pvo_config* cfg, const char* data_dir,
                const char* params_path, const char* out_report) {
  return guarded([&] {
    if (!cfg || !data_dir || !out_report) usage_null();
    const pvo::ModelConfig& c = cfg->cfg;
    ManifestWriter manifest("run", c);
    manifest.input(data_dir);

    std::vector<LoadedScene> data = load_dataset(c, data_dir);
    pvo::ParamStore params = pvo::make_params(c);
    if (params_path) {
      params.load_values(params_path);
      manifest.input(params_path);
    }

    pvo::ConfusionTable table(c.n_classes);
    std::vector<pvo::ConfusionTable> band_tables(
        c.stats_bands, pvo::ConfusionTable(c.n_classes));
    const bool fused = c.fusion_mode == pvo::FusionMode::kFused;
    for (const auto& ls : data) {
      pvo::FeatureVolume cam;
      if (fused) cam = camera_for(c, ls);
      pvo::ForwardResult fwd =
          pvo::pipeline_forward(c, params, ls.scene.cloud,
                                fused ? &cam : nullptr);
      pvo::accumulate(fwd.labels, ls.scene.truth, table);
      pvo::accumulate_banded(fwd.labels, ls.scene.truth, band_tables);
    }
    const auto bands = pvo::bands_from_tables(band_tables, c.grids.cartesian);
    write_text_atomic(out_report, pvo::metrics_report_json(table, bands) + "\n");
    const std::string csv_path =
        fs::path(out_report).replace_extension(".csv").string();
    write_text_atomic(csv_path, pvo::metrics_report_csv(table));
    manifest.output(out_report);
    manifest.output(csv_path);
    manifest.commit(out_report);
    return PVO_OK;
  });
}

int pvo_cmd_train(const pvo_config* cfg, const char* data_dir,
                  const char* out_dir) {
  return guarded([&] {
    if (!cfg || !data_dir || !out_dir) usage_null();
    const pvo::ModelConfig& c = cfg->cfg;
    ManifestWriter manifest("train", c);
    manifest.input(data_dir);
    fs::create_directories(out_dir);

    std::vector<pvo::Scene> scenes = strip(load_dataset(c, data_dir));
    pvo::ParamStore params = pvo::make_params(c);
    const auto log = pvo::train(c, scenes, params);

    std::string lines;
    char buf[160];
    for (const auto& entry : log) {
      std::snprintf(buf, sizeof(buf),
                    "{\"step\":%d,\"loss\":%.17g,\"grad_norm\":%.17g}\n",
                    entry.step, entry.loss, entry.grad_norm);
      lines += buf;
    }
    const fs::path dir(out_dir);
    const std::string log_p = (dir / "log.jsonl").string();
    const std::string ckpt_p = (dir / "checkpoint.ckpt").string();
    write_text_atomic(log_p, lines);
    params.save(ckpt_p);
    manifest.output(log_p);
    manifest.output(ckpt_p);
    manifest.commit(out_dir);
    return PVO_OK;
  });
}

int pvo_cmd_ablate(const pvo_config* cfg, const char* train_dir,
                   const char* val_dir, const char* out_dir) {
  return guarded([&] {
    if (!cfg || !train_dir || !val_dir || !out_dir) usage_null();
    const pvo::ModelConfig& c = cfg->cfg;
    ManifestWriter manifest("ablate", c);
    manifest.input(train_dir);
    manifest.input(val_dir);
    fs::create_directories(out_dir);

    std::vector<pvo::Scene> tr = strip(load_dataset(c, train_dir));
    std::vector<pvo::Scene> va = strip(load_dataset(c, val_dir));
    const auto rows = pvo::ablate(c, tr, va);

    const fs::path dir(out_dir);
    const std::string md_p = (dir / "ablation.md").string();
    const std::string json_p = (dir / "ablation.json").string();
    write_text_atomic(md_p, pvo::ablate_markdown(rows));
    write_text_atomic(json_p, pvo::ablate_json(rows) + "\n");
    manifest.output(md_p);
    manifest.output(json_p);
    manifest.commit(out_dir);
    return PVO_OK;
  });
}

int pvo_cmd_gradcheck(const pvo_config* cfg, const char* out_report) {
  return guarded([&] {
    if (!cfg || !out_report) usage_null();
    const pvo::ModelConfig& c = cfg->cfg;
    const auto bins = pvo::grid_bins(c.input_grid());
    if (static_cast<int64_t>(bins[0]) * bins[1] * bins[2] > 512) {
      pvo::throw_config(
          "gradcheck requires a tiny preset (finite differences over every "
          "parameter)");
    }
    ManifestWriter manifest("gradcheck", c);
    const auto report = pvo::gradcheck_all(c, c.seed);
    write_text_atomic(out_report, report.to_json() + "\n");
    manifest.output(out_report);
    manifest.commit(out_report);
    return report.pass ? PVO_OK : PVO_ERR_INTERNAL;
  });
}

int pvo_cmd_stats(const pvo_config* cfg, const char* data_dir, int bands,
                  const char* out_report) {
  return guarded([&] {
    if (!cfg || !data_dir || !out_report) usage_null();
    if (bands < 1) pvo::throw_config("stats: bands must be >= 1");
    const pvo::ModelConfig& c = cfg->cfg;
    ManifestWriter manifest("stats", c);
    manifest.input(data_dir);

    std::vector<LoadedScene> data = load_dataset(c, data_dir);
    nlohmann::json j;
    auto histogram_json = [&](const pvo::GridSpec& spec) {
      // Bands accumulated per scene, then aggregated point/voxel-wise.
      std::vector<int64_t> occ(bands, 0), pts(bands, 0);
      std::vector<nlohmann::json> per_scene;
      for (const auto& ls : data) {
        const auto h = pvo::occupancy_histogram(ls.scene.cloud, spec, bands);
        for (int b = 0; b < bands; ++b) {
          occ[b] += h[b].occupied_voxels;
          pts[b] += h[b].points;
        }
      }
      nlohmann::json out;
      out["bands"] = nlohmann::json::array();
      double mn = 0.0, mx = 0.0;
      bool any = false;
      for (int b = 0; b < bands; ++b) {
        const double ppv =
            occ[b] > 0 ? static_cast<double>(pts[b]) / occ[b] : 0.0;
        out["bands"].push_back({{"band", b},
                                {"occupied_voxels", occ[b]},
                                {"points", pts[b]},
                                {"points_per_occupied_voxel", ppv}});
        if (occ[b] > 0) {
          if (!any) {
            mn = mx = ppv;
            any = true;
          } else {
            mn = std::min(mn, ppv);
            mx = std::max(mx, ppv);
          }
        }
      }
      out["imbalance"] = (!any || mn == 0.0) ? 1.0 : mx / mn;
      return out;
    };
    j["polar"] = histogram_json(c.grids.polar);
    j["cartesian"] = histogram_json(c.grids.cartesian_input);

    write_text_atomic(out_report, j.dump(2) + "\n");
    // CSV table of the same bands.
    std::string csv = "grid,band,occupied_voxels,points,points_per_occupied_voxel\n";
    for (const char* grid : {"polar", "cartesian"}) {
      for (const auto& b : j[grid]["bands"]) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%d,%lld,%lld,%.6f\n", grid,
                      b["band"].get<int>(),
                      static_cast<long long>(b["occupied_voxels"].get<int64_t>()),
                      static_cast<long long>(b["points"].get<int64_t>()),
                      b["points_per_occupied_voxel"].get<double>());
        csv += buf;
      }
    }
    const std::string csv_path =
        fs::path(out_report).replace_extension(".csv").string();
    write_text_atomic(csv_path, csv);
    manifest.output(out_report);
    manifest.output(csv_path);
    manifest.commit(out_report);
    return PVO_OK;
  });
}

int pvo_cmd_resample(const pvo_config* cfg, const char* in_array,
                     const char* out_array) {
  return guarded([&] {
    if (!cfg || !in_array || !out_array) usage_null();
    const pvo::ModelConfig& c = cfg->cfg;
    ManifestWriter manifest("resample", c);
    manifest.input(in_array);

    pvo::Array a = pvo::load_array(in_array);
    const auto bins = pvo::grid_bins(c.input_grid());
    if (a.rank() != 4 || a.extent(0) != bins[0] || a.extent(1) != bins[1] ||
        a.extent(2) != bins[2]) {
      pvo::throw_data("array extents " + a.shape_str() +
                      " do not match the input grid");
    }
    pvo::FeatureVolume vol;
    vol.spec = c.input_grid();
    vol.channels = a.extent(3);
    vol.data = std::move(a);
    pvo::FeatureVolume out =
        pvo::resample_to_cartesian(vol, c.grids.cartesian);
    pvo::save_array(out_array, out.data);
    manifest.output(out_array);
    manifest.commit(out_array);
    return PVO_OK;
  });
}

}  // extern "C"
