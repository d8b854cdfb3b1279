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
#include "pvo/pdconv.hpp"

namespace pvo {

PdTopology pd_topology_from_string(const std::string& name) {
  if (name == "a") return PdTopology::kA;
  if (name == "b") return PdTopology::kB;
  if (name == "c") return PdTopology::kC;
  if (name == "d") return PdTopology::kD;
  if (name == "assym") return PdTopology::kAssym;
  if (name == "naive") return PdTopology::kNaive;
  throw_config("unknown pdconv topology '" + name +
               "' (expected a|b|c|d|assym|naive)");
}

std::string pd_topology_to_string(PdTopology t) {
  switch (t) {
    case PdTopology::kA: return "a";
    case PdTopology::kB: return "b";
    case PdTopology::kC: return "c";
    case PdTopology::kD: return "d";
    case PdTopology::kAssym: return "assym";
    case PdTopology::kNaive: return "naive";
  }
  return "?";
}

std::vector<std::vector<int>> pd_chains(PdTopology t) {
  switch (t) {
    case PdTopology::kA: return {{0, 1, 2}};
    case PdTopology::kB: return {{0}, {1}, {2}};
    case PdTopology::kC: return {{0, 1, 2}, {1, 2, 0}};
    case PdTopology::kD: return {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}};
    case PdTopology::kAssym: return {{0, 1}};
    case PdTopology::kNaive: return {};
  }
  return {};
}

namespace {

const Array& kernel_of(const PdBlockParams& p, int which) {
  switch (which) {
    case 0: return p.k_r;
    case 1: return p.k_a;
    default: return p.k_z;
  }
}

Array& kernel_of(PdBlockParams& p, int which) {
  switch (which) {
    case 0: return p.k_r;
    case 1: return p.k_a;
    default: return p.k_z;
  }
}

void check_block(const Array& x, const PdBlockParams& p, PdTopology t) {
  const int cin = x.extent(3);
  auto need = [&](const Array& k, int ci, const char* name) {
    if (k.rank() != 5 || k.extent(3) != ci) {
      throw_config(std::string("pd block kernel ") + name +
                   " has channel width incompatible with input (" +
                   k.shape_str() + " for Cin " + std::to_string(ci) + ")");
    }
  };
  if (t == PdTopology::kNaive) {
    need(p.k3, cin, "k3");
    return;
  }
  const auto chains = pd_chains(t);
  for (const auto& chain : chains) {
    int c = cin;
    for (int step : chain) {
      need(kernel_of(p, step), c, step == 0 ? "k_r" : (step == 1 ? "k_a" : "k_z"));
      c = kernel_of(p, step).extent(4);
    }
  }
}

inline Array maybe_relu(const Array& pre, bool linear) {
  return linear ? pre : relu(pre);
}

}  // namespace

Array pd_block_forward(const Array& x, const PdBlockParams& params,
                       const PdStackConfig& cfg, const ConvPadding& pad,
                       PdBlockCache* cache) {
  check_block(x, params, cfg.topology);
  if (cache) cache->pre.clear();

  if (cfg.topology == PdTopology::kNaive) {
    Array pre = conv3d(x, params.k3, pad);
    if (cache) cache->pre.push_back({pre});
    return maybe_relu(pre, cfg.linear_mode);
  }

  const auto chains = pd_chains(cfg.topology);
  Array out;
  const double inv = 1.0 / chains.size();
  for (const auto& chain : chains) {
    std::vector<Array> pres;
    Array y = x;
    for (int step : chain) {
      Array pre = conv3d(y, kernel_of(params, step), pad);
      y = maybe_relu(pre, cfg.linear_mode);
      pres.push_back(std::move(pre));
    }
    if (out.numel() == 0) {
      out = scale(y, inv);
    } else {
      axpy(inv, y, out);
    }
    if (cache) cache->pre.push_back(std::move(pres));
  }
  return out;
}

void pd_block_backward(const Array& x, const PdBlockParams& params,
                       const PdStackConfig& cfg, const ConvPadding& pad,
                       const PdBlockCache& cache, const Array& dout,
                       Array& dx, PdBlockParams& dparams) {
  if (cfg.topology == PdTopology::kNaive) {
    const Array& pre = cache.pre.at(0).at(0);
    Array g = cfg.linear_mode ? dout : relu_backward(pre, dout);
    conv3d_backward(x, params.k3, pad, g, dx, dparams.k3);
    return;
  }

  const auto chains = pd_chains(cfg.topology);
  const double inv = 1.0 / chains.size();
  for (size_t ci = 0; ci < chains.size(); ++ci) {
    const auto& chain = chains[ci];
    const auto& pres = cache.pre.at(ci);
    Array g = scale(dout, inv);
    for (int s = static_cast<int>(chain.size()) - 1; s >= 0; --s) {
      if (!cfg.linear_mode) g = relu_backward(pres[s], g);
      const Array input =
          s == 0 ? x : maybe_relu(pres[s - 1], cfg.linear_mode);
      Array dinput(input.shape());
      conv3d_backward(input, kernel_of(params, chain[s]), pad, g, dinput,
                      kernel_of(dparams, chain[s]));
      g = std::move(dinput);
    }
    axpy(1.0, g, dx);
  }
}

PdBlockStats pd_block_stats(const PdStackConfig& cfg, int cin, int cout,
                            const std::array<int, 3>& extents) {
  PdBlockStats st;
  const int64_t vox =
      static_cast<int64_t>(extents[0]) * extents[1] * extents[2];
  if (cfg.topology == PdTopology::kNaive) {
    st.params = 27LL * cin * cout;
    st.multiplies = vox * 27LL * cin * cout;
    return st;
  }
  // Kernel tensors are shared across chains, so parameters count once.
  st.params = 9LL * cin * cout + 2LL * 9LL * cout * cout;
  if (cfg.topology == PdTopology::kAssym) {
    st.params = 9LL * cin * cout + 9LL * cout * cout;
  }
  for (const auto& chain : pd_chains(cfg.topology)) {
    int c = cin;
    for (size_t step = 0; step < chain.size(); ++step) {
      st.multiplies += vox * 9LL * c * cout;  // widths after step one are equal
      c = cout;
    }
  }
  return st;
}

std::array<int, 3> backbone_output_extents(
    const std::array<int, 3>& in,
    const std::vector<std::array<int, 3>>& schedule) {
  std::array<int, 3> e = in;
  for (const auto& s : schedule) {
    for (int ax = 0; ax < 3; ++ax) {
      if (s[ax] < 1 || e[ax] % s[ax] != 0) {
        throw_config("backbone stride " + std::to_string(s[ax]) +
                     " does not divide extent " + std::to_string(e[ax]));
      }
      e[ax] /= s[ax];
    }
  }
  return e;
}

Array backbone_forward(const Array& x, const BackboneParams& params,
                       const BackboneConfig& cfg, const ConvPadding& pad,
                       BackboneCache* cache) {
  if (params.blocks.size() != cfg.schedule.size()) {
    throw_config("backbone: one block per schedule stage required");
  }
  backbone_output_extents({x.extent(0), x.extent(1), x.extent(2)},
                          cfg.schedule);
  Array y = x;
  if (params.stem.numel() > 0) {
    Array pre = conv3d(y, params.stem, pad);
    if (cache) cache->stem_pre = pre;
    y = relu(pre);
  }
  for (size_t i = 0; i < cfg.schedule.size(); ++i) {
    const auto& s = cfg.schedule[i];
    y = avg_pool3d(y, s[0], s[1], s[2]);
    if (cache) {
      cache->stage_input.push_back(y);
      cache->block_cache.emplace_back();
    }
    y = pd_block_forward(y, params.blocks[i], cfg.block, pad,
                         cache ? &cache->block_cache.back() : nullptr);
  }
  return y;
}

void backbone_backward(const Array& x, const BackboneParams& params,
                       const BackboneConfig& cfg, const ConvPadding& pad,
                       const BackboneCache& cache, const Array& dout,
                       Array& dx, BackboneParams& dparams) {
  Array g = dout;
  for (int i = static_cast<int>(cfg.schedule.size()) - 1; i >= 0; --i) {
    const Array& input = cache.stage_input.at(i);
    Array dinput(input.shape());
    pd_block_backward(input, params.blocks[i], cfg.block, pad,
                      cache.block_cache.at(i), g, dinput, dparams.blocks[i]);
    const auto& s = cfg.schedule[i];
    // Shape before this stage's pooling.
    std::vector<int> pre_pool_shape = {input.extent(0) * s[0],
                                       input.extent(1) * s[1],
                                       input.extent(2) * s[2], input.extent(3)};
    g = avg_pool3d_backward(pre_pool_shape, s[0], s[1], s[2], dinput);
  }
  if (params.stem.numel() > 0) {
    Array g_pre = relu_backward(cache.stem_pre, g);
    conv3d_backward(x, params.stem, pad, g_pre, dx, dparams.stem);
  } else {
    axpy(1.0, g, dx);
  }
}

}  // namespace pvo
