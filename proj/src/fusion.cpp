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
#include "pvo/fusion.hpp"

#include <cmath>

namespace pvo {

FusionParams make_fusion_params(int channels, int gate_channels) {
  FusionParams p;
  p.gate_kernel = Array({3, 3, 3, 2 * channels, gate_channels});
  p.gate_proj = Array({gate_channels});
  p.gate_bias = Array({1});
  return p;
}

namespace {

void check_fusion(const FeatureVolume& fl, const FeatureVolume& fc,
                  const FusionParams& p) {
  if (!fl.data.same_shape(fc.data)) {
    throw_config("modal_fuse: volume extents differ, " + fl.data.shape_str() +
                 " vs " + fc.data.shape_str());
  }
  if (p.gate_kernel.rank() != 5 ||
      p.gate_kernel.extent(3) != 2 * fl.channels ||
      p.gate_proj.numel() != p.gate_kernel.extent(4) ||
      p.gate_bias.numel() != 1) {
    throw_config("modal_fuse: gate parameter shapes inconsistent");
  }
}

}  // namespace

FeatureVolume modal_fuse(const FeatureVolume& f_lidar,
                         const FeatureVolume& f_camera,
                         const FusionParams& params, const ConvPadding& pad,
                         FusionCache* cache) {
  check_fusion(f_lidar, f_camera, params);
  const int C = f_lidar.channels;
  const auto b = f_lidar.bins();
  const int64_t n_vox = static_cast<int64_t>(b[0]) * b[1] * b[2];

  Array concat({b[0], b[1], b[2], 2 * C});
  for (int64_t v = 0; v < n_vox; ++v) {
    const double* l = f_lidar.data.data() + v * C;
    const double* c = f_camera.data.data() + v * C;
    double* d = concat.data() + v * 2 * C;
    std::copy(l, l + C, d);
    std::copy(c, c + C, d + C);
  }

  Array conv_out = conv3d(concat, params.gate_kernel, pad);
  const int cg = params.gate_proj.extent(0);
  Array gate({b[0], b[1], b[2], 1});
  for (int64_t v = 0; v < n_vox; ++v) {
    double pre = params.gate_bias[0];
    const double* h = conv_out.data() + v * cg;
    for (int c = 0; c < cg; ++c) pre += h[c] * params.gate_proj[c];
    gate[v] = 1.0 / (1.0 + std::exp(-pre));
  }

  FeatureVolume out = FeatureVolume::zeros(f_lidar.spec, C);
  for (int64_t v = 0; v < n_vox; ++v) {
    const double w = gate[v];
    const double* l = f_lidar.data.data() + v * C;
    const double* c = f_camera.data.data() + v * C;
    double* d = out.data.data() + v * C;
    for (int ch = 0; ch < C; ++ch) d[ch] = w * l[ch] + (1.0 - w) * c[ch];
  }
  if (cache) {
    cache->concat = std::move(concat);
    cache->conv_out = std::move(conv_out);
    cache->gate = std::move(gate);
  }
  return out;
}

void modal_fuse_backward(const FeatureVolume& f_lidar,
                         const FeatureVolume& f_camera,
                         const FusionParams& params, const ConvPadding& pad,
                         const FusionCache& cache, const Array& dout,
                         Array& d_lidar, Array& d_camera,
                         FusionParams& dparams) {
  const int C = f_lidar.channels;
  const auto b = f_lidar.bins();
  const int64_t n_vox = static_cast<int64_t>(b[0]) * b[1] * b[2];
  const int cg = params.gate_proj.extent(0);

  Array dconv(cache.conv_out.shape());
  for (int64_t v = 0; v < n_vox; ++v) {
    const double w = cache.gate[v];
    const double* g = dout.data() + v * C;
    const double* l = f_lidar.data.data() + v * C;
    const double* c = f_camera.data.data() + v * C;
    double* dl = d_lidar.data() + v * C;
    double* dc = d_camera.data() + v * C;
    double dw = 0.0;
    for (int ch = 0; ch < C; ++ch) {
      dl[ch] += g[ch] * w;
      dc[ch] += g[ch] * (1.0 - w);
      dw += g[ch] * (l[ch] - c[ch]);
    }
    const double dpre = dw * w * (1.0 - w);  // sigmoid'
    dparams.gate_bias[0] += dpre;
    const double* h = cache.conv_out.data() + v * cg;
    double* dh = dconv.data() + v * cg;
    for (int ch = 0; ch < cg; ++ch) {
      dparams.gate_proj[ch] += dpre * h[ch];
      dh[ch] = dpre * params.gate_proj[ch];
    }
  }

  Array dconcat(cache.concat.shape());
  conv3d_backward(cache.concat, params.gate_kernel, pad, dconv, dconcat,
                  dparams.gate_kernel);
  for (int64_t v = 0; v < n_vox; ++v) {
    const double* d = dconcat.data() + v * 2 * C;
    double* dl = d_lidar.data() + v * C;
    double* dc = d_camera.data() + v * C;
    for (int ch = 0; ch < C; ++ch) {
      dl[ch] += d[ch];
      dc[ch] += d[C + ch];
    }
  }
}

}  // namespace pvo
