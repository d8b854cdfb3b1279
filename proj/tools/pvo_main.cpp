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

// Command-line front end; all functionality goes through the shared-library
// C API.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "pvo/pvo.h"

namespace {

struct GlobalArgs {
  std::string config;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

// Builds a config from --config or a preset, applying global overrides.
// Returns nullptr (and prints to stderr) on failure.
pvo_config* make_config(const GlobalArgs& g, const std::string& fallback_preset,
                        int* code) {
  pvo_config* cfg = nullptr;
  int rc = g.config.empty()
               ? pvo_config_create_preset(fallback_preset.c_str(), &cfg)
               : pvo_config_create_from_file(g.config.c_str(), &cfg);
  if (rc != PVO_OK) {
    std::fprintf(stderr, "error: %s\n", pvo_last_error());
    *code = rc;
    return nullptr;
  }
  if (g.seed_set) pvo_config_set_seed(cfg, g.seed);
  if (g.threads > 0 && pvo_config_set_threads(cfg, g.threads) != PVO_OK) {
    std::fprintf(stderr, "error: %s\n", pvo_last_error());
    *code = PVO_ERR_USAGE;
    pvo_config_destroy(cfg);
    return nullptr;
  }
  *code = PVO_OK;
  return cfg;
}

int report(int rc) {
  if (rc != PVO_OK) std::fprintf(stderr, "error: %s\n", pvo_last_error());
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polar-grid 3D semantic occupancy pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pvo_version()));

  GlobalArgs g;
  app.add_option("--config", g.config, "Model/grid config JSON")
      ->envname("PVO_CONFIG");
  auto* seed_opt = app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--threads", g.threads, "Cap worker threads (>=1)");
  // Global flags remain valid after the subcommand name.
  app.fallthrough();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate labeled synthetic scenes");
  int n_scenes = 1;
  std::string synth_out;
  synth->add_option("--scenes", n_scenes, "Number of scenes");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Forward + metrics over a dataset");
  std::string run_data, run_params, run_out = "report.json";
  run->add_option("--data", run_data, "Dataset directory")->required();
  run->add_option("--params", run_params, "Checkpoint file");
  run->add_option("--out", run_out, "Metrics report path");

  // train
  auto* tr = app.add_subcommand("train", "Train on a dataset");
  std::string train_data, train_out;
  tr->add_option("--data", train_data, "Dataset directory")->required();
  tr->add_option("--out", train_out, "Output directory")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Component-toggle ablation table");
  std::string ab_data, ab_val, ab_out;
  ab->add_option("--data", ab_data, "Training dataset directory")->required();
  ab->add_option("--val", ab_val, "Validation dataset directory")->required();
  ab->add_option("--out", ab_out, "Output directory")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "Analytic-vs-finite-difference gradient check");
  std::string gc_out = "gradcheck.json";
  gc->add_option("--out", gc_out, "Report path");

  // stats
  auto* st = app.add_subcommand("stats", "Occupancy histograms per grid");
  std::string st_data, st_out = "stats.json";
  int st_bands = 5;
  st->add_option("--data", st_data, "Dataset directory")->required();
  st->add_option("--bands", st_bands, "Number of range bands");
  st->add_option("--out", st_out, "Report path");

  // resample
  auto* rs = app.add_subcommand("resample",
                                "Resample a polar feature volume to Cartesian");
  std::string rs_in, rs_out;
  rs->add_option("--in", rs_in, "Input array file")->required();
  rs->add_option("--out", rs_out, "Output array file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return PVO_ERR_USAGE;
  }
  g.seed_set = seed_opt->count() > 0;

  int code = 0;
  pvo_config* cfg =
      make_config(g, gc->parsed() ? "tiny" : "desk", &code);
  if (!cfg) return code;

  int rc = PVO_OK;
  if (synth->parsed()) {
    rc = pvo_cmd_synth(cfg, n_scenes, synth_out.c_str());
  } else if (run->parsed()) {
    rc = pvo_cmd_run(cfg, run_data.c_str(),
                     run_params.empty() ? nullptr : run_params.c_str(),
                     run_out.c_str());
  } else if (tr->parsed()) {
    rc = pvo_cmd_train(cfg, train_data.c_str(), train_out.c_str());
  } else if (ab->parsed()) {
    rc = pvo_cmd_ablate(cfg, ab_data.c_str(), ab_val.c_str(), ab_out.c_str());
  } else if (gc->parsed()) {
    rc = pvo_cmd_gradcheck(cfg, gc_out.c_str());
  } else if (st->parsed()) {
    rc = pvo_cmd_stats(cfg, st_data.c_str(), st_bands, st_out.c_str());
  } else if (rs->parsed()) {
    rc = pvo_cmd_resample(cfg, rs_in.c_str(), rs_out.c_str());
  }
  pvo_config_destroy(cfg);
  return report(rc);
}
