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
#include "pvo/head.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pvo/synth.hpp"

namespace pvo {

SemanticGrid SemanticGrid::zeros(const CartesianGridSpec& spec, int n_classes) {
  SemanticGrid g;
  g.spec = spec;
  g.n_classes = n_classes;
  g.labels.assign(
      static_cast<size_t>(spec.bins_x) * spec.bins_y * spec.bins_z, 0);
  return g;
}

void SemanticGrid::validate() const {
  if (n_classes < 1) throw_data("semantic grid needs n_classes >= 1");
  const int64_t expect =
      static_cast<int64_t>(spec.bins_x) * spec.bins_y * spec.bins_z;
  if (numel() != expect) {
    throw_data("semantic grid label count " + std::to_string(numel()) +
               " does not match spec bins");
  }
  for (uint16_t l : labels) {
    if (l >= n_classes) {
      throw_data("label " + std::to_string(l) + " out of range [0, " +
                 std::to_string(n_classes) + ")");
    }
  }
}

namespace {

constexpr char kSemMagic[] = "PVOSEM1";

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw_io("semantic grid container truncated");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void SemanticGrid::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_io("cannot open " + path + " for writing");
  os.write(kSemMagic, 7);
  put_u32(os, static_cast<uint32_t>(spec.bins_x));
  put_u32(os, static_cast<uint32_t>(spec.bins_y));
  put_u32(os, static_cast<uint32_t>(spec.bins_z));
  for (uint16_t l : labels) {
    unsigned char b[2] = {static_cast<unsigned char>(l & 0xff),
                          static_cast<unsigned char>((l >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
  if (!os) throw_io("write failed for " + path);
}

SemanticGrid SemanticGrid::load(const std::string& path, int n_classes) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, kSemMagic, 7) != 0) {
    throw_io("bad semantic grid magic in " + path);
  }
  SemanticGrid g;
  g.n_classes = n_classes;
  g.spec.bins_x = static_cast<int>(get_u32(is));
  g.spec.bins_y = static_cast<int>(get_u32(is));
  g.spec.bins_z = static_cast<int>(get_u32(is));
  const int64_t n =
      static_cast<int64_t>(g.spec.bins_x) * g.spec.bins_y * g.spec.bins_z;
  g.labels.resize(n);
  for (int64_t i = 0; i < n; ++i) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw_io("semantic grid container truncated");
    g.labels[i] = static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  return g;
}

std::string SemanticGrid::summary_json() const {
  std::vector<int64_t> counts(n_classes, 0);
  for (uint16_t l : labels) ++counts[l];
  nlohmann::json j;
  for (int c = 0; c < n_classes; ++c) {
    j["counts"][class_name(c)] = counts[c];
  }
  return j.dump();
}

namespace {

struct AxisSpec {
  double lo, width;
  int extent;
  bool wrap;
};

std::array<AxisSpec, 3> axes_of(const GridSpec& spec) {
  if (const auto* p = std::get_if<PolarGridSpec>(&spec)) {
    return {AxisSpec{p->r_min, p->width_r(), p->bins_r, false},
            AxisSpec{-M_PI, p->width_a(), p->bins_a, true},
            AxisSpec{p->z_min, p->width_z(), p->bins_z, false}};
  }
  const auto& c = std::get<CartesianGridSpec>(spec);
  return {AxisSpec{c.x_min, c.width_x(), c.bins_x, false},
          AxisSpec{c.y_min, c.width_y(), c.bins_y, false},
          AxisSpec{c.z_min, c.width_z(), c.bins_z, false}};
}

}  // namespace

int trilinear_taps(const GridSpec& spec, const PolarPoint& polar,
                   const CartPoint& cart, SampleTap taps[8]) {
  const auto axes = axes_of(spec);
  const bool is_polar = std::holds_alternative<PolarGridSpec>(spec);
  const double native[3] = {is_polar ? polar.r : cart.x,
                            is_polar ? polar.theta : cart.y,
                            is_polar ? polar.z : cart.z};
  int i0[3], i1[3];
  double frac[3];
  for (int ax = 0; ax < 3; ++ax) {
    const AxisSpec& s = axes[ax];
    double u = (native[ax] - s.lo) / s.width - 0.5;
    if (s.wrap) {
      const double f = std::floor(u);
      int base = static_cast<int>(f) % s.extent;
      if (base < 0) base += s.extent;
      i0[ax] = base;
      i1[ax] = (base + 1) % s.extent;
      frac[ax] = u - f;
    } else {
      // Half-bin grace band beyond the grid, zero feature further out.
      if (u < -1.0 || u > static_cast<double>(s.extent)) return 0;
      u = std::clamp(u, 0.0, static_cast<double>(s.extent - 1));
      const double f = std::floor(u);
      i0[ax] = static_cast<int>(f);
      i1[ax] = std::min(i0[ax] + 1, s.extent - 1);
      frac[ax] = u - f;
    }
  }
  const int64_t s1 = axes[1].extent, s2 = axes[2].extent;
  int n = 0;
  for (int c0 = 0; c0 < 2; ++c0) {
    const double w0 = c0 ? frac[0] : 1.0 - frac[0];
    if (w0 == 0.0) continue;
    const int a0 = c0 ? i1[0] : i0[0];
    for (int c1 = 0; c1 < 2; ++c1) {
      const double w1 = c1 ? frac[1] : 1.0 - frac[1];
      if (w1 == 0.0) continue;
      const int a1 = c1 ? i1[1] : i0[1];
      for (int c2 = 0; c2 < 2; ++c2) {
        const double w2 = c2 ? frac[2] : 1.0 - frac[2];
        if (w2 == 0.0) continue;
        const int a2 = c2 ? i1[2] : i0[2];
        taps[n].voxel = (static_cast<int64_t>(a0) * s1 + a1) * s2 + a2;
        taps[n].weight = w0 * w1 * w2;
        ++n;
      }
    }
  }
  return n;
}

namespace {

Array sample_impl(const FeatureVolume& vol, const PolarPoint& polar,
                  const CartPoint& cart) {
  SampleTap taps[8];
  const int n = trilinear_taps(vol.spec, polar, cart, taps);
  Array out({vol.channels});
  for (int t = 0; t < n; ++t) {
    const double* src = vol.data.data() + taps[t].voxel * vol.channels;
    for (int c = 0; c < vol.channels; ++c) out[c] += taps[t].weight * src[c];
  }
  return out;
}

}  // namespace

Array trilinear_sample(const FeatureVolume& vol, const PolarPoint& q) {
  return sample_impl(vol, q, polar_to_cart(q));
}

Array trilinear_sample(const FeatureVolume& vol, const CartPoint& q) {
  return sample_impl(vol, cart_to_polar(q), q);
}

FeatureVolume resample_to_cartesian(const FeatureVolume& vol,
                                    const CartesianGridSpec& out_spec) {
  FeatureVolume out = FeatureVolume::zeros(out_spec, vol.channels);
  const int C = vol.channels;
  SampleTap taps[8];
  int64_t flat = 0;
  for (int ix = 0; ix < out_spec.bins_x; ++ix) {
    for (int iy = 0; iy < out_spec.bins_y; ++iy) {
      for (int iz = 0; iz < out_spec.bins_z; ++iz, ++flat) {
        const CartPoint c = out_spec.voxel_center_unchecked(ix, iy, iz);
        const int n = trilinear_taps(vol.spec, cart_to_polar(c), c, taps);
        double* dst = out.data.data() + flat * C;
        for (int t = 0; t < n; ++t) {
          const double* src = vol.data.data() + taps[t].voxel * C;
          for (int ch = 0; ch < C; ++ch) dst[ch] += taps[t].weight * src[ch];
        }
      }
    }
  }
  return out;
}

Array resample_backward(const FeatureVolume& vol,
                        const CartesianGridSpec& out_spec, const Array& dout) {
  Array din(vol.data.shape());
  const int C = vol.channels;
  SampleTap taps[8];
  int64_t flat = 0;
  for (int ix = 0; ix < out_spec.bins_x; ++ix) {
    for (int iy = 0; iy < out_spec.bins_y; ++iy) {
      for (int iz = 0; iz < out_spec.bins_z; ++iz, ++flat) {
        const CartPoint c = out_spec.voxel_center_unchecked(ix, iy, iz);
        const int n = trilinear_taps(vol.spec, cart_to_polar(c), c, taps);
        const double* g = dout.data() + flat * C;
        for (int t = 0; t < n; ++t) {
          double* dst = din.data() + taps[t].voxel * C;
          for (int ch = 0; ch < C; ++ch) dst[ch] += taps[t].weight * g[ch];
        }
      }
    }
  }
  return din;
}

ClassifyResult classify(const FeatureVolume& cart, const HeadParams& params,
                        int n_classes) {
  const auto* spec = std::get_if<CartesianGridSpec>(&cart.spec);
  if (!spec) throw_config("classify expects a Cartesian feature volume");
  const int C = cart.channels;
  if (params.classifier.rank() != 2 || params.classifier.extent(0) != C ||
      params.classifier.extent(1) != n_classes ||
      params.bias.extent(0) != n_classes) {
    throw_shape("classifier shape " + params.classifier.shape_str() +
                " does not match channels " + std::to_string(C) + " classes " +
                std::to_string(n_classes));
  }
  ClassifyResult res;
  res.logits = Array({spec->bins_x, spec->bins_y, spec->bins_z, n_classes});
  res.labels = SemanticGrid::zeros(*spec, n_classes);
  const int64_t n_vox = res.labels.numel();
  for (int64_t v = 0; v < n_vox; ++v) {
    const double* f = cart.data.data() + v * C;
    double* lg = res.logits.data() + v * n_classes;
    for (int k = 0; k < n_classes; ++k) lg[k] = params.bias[k];
    for (int c = 0; c < C; ++c) {
      const double fv = f[c];
      const double* w = params.classifier.data() + static_cast<int64_t>(c) * n_classes;
      for (int k = 0; k < n_classes; ++k) lg[k] += fv * w[k];
    }
    int best = 0;
    for (int k = 1; k < n_classes; ++k) {
      if (lg[k] > lg[best]) best = k;
    }
    res.labels.labels[v] = static_cast<uint16_t>(best);
  }
  return res;
}

void classify_backward(const FeatureVolume& cart, const HeadParams& params,
                       const Array& dlogits, Array& dfeatures,
                       Array& dclassifier, Array& dbias) {
  const int C = cart.channels;
  const int K = params.classifier.extent(1);
  const int64_t n_vox = cart.data.numel() / C;
  for (int64_t v = 0; v < n_vox; ++v) {
    const double* f = cart.data.data() + v * C;
    const double* g = dlogits.data() + v * K;
    double* df = dfeatures.data() + v * C;
    for (int k = 0; k < K; ++k) dbias[k] += g[k];
    for (int c = 0; c < C; ++c) {
      const double* w = params.classifier.data() + static_cast<int64_t>(c) * K;
      double* dw = dclassifier.data() + static_cast<int64_t>(c) * K;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) {
        acc += g[k] * w[k];
        dw[k] += f[c] * g[k];
      }
      df[c] += acc;
    }
  }
}

double cross_entropy_loss(const Array& logits, const SemanticGrid& target,
                          const std::vector<double>& class_weights,
                          Array* dlogits) {
  const int K = logits.extent(logits.rank() - 1);
  const int64_t n_vox = logits.numel() / K;
  if (n_vox != target.numel()) {
    throw_shape("cross_entropy_loss voxel count mismatch");
  }
  if (static_cast<int>(class_weights.size()) != K) {
    throw_shape("class_weights size must equal n_classes");
  }
  for (double w : class_weights) {
    if (w < 0.0) throw_config("class weights must be nonnegative");
  }
  if (dlogits) *dlogits = Array(logits.shape());

  double total = 0.0;
  std::vector<double> prob(K);
  for (int64_t v = 0; v < n_vox; ++v) {
    const uint16_t t = target.labels[v];
    if (t >= K) {
      throw_data("target label " + std::to_string(t) + " out of range");
    }
    const double* lg = logits.data() + v * K;
    double mx = lg[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, lg[k]);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      prob[k] = std::exp(lg[k] - mx);
      sum += prob[k];
    }
    const double w = class_weights[t];
    total += w * (std::log(sum) - (lg[t] - mx));
    if (dlogits) {
      double* d = dlogits->data() + v * K;
      for (int k = 0; k < K; ++k) {
        d[k] = w * (prob[k] / sum - (k == t ? 1.0 : 0.0)) / n_vox;
      }
    }
  }
  return total / n_vox;
}

}  // namespace pvo
