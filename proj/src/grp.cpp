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
#include "pvo/grp.hpp"

#include <algorithm>
#include <cmath>

namespace pvo {

namespace {

// Shortest signed index delta on a ring of n bins; n <= 0 means no wrap.
inline int wrap_delta(int d, int n) {
  if (n <= 0) return d;
  int m = d % n;
  if (m < 0) m += n;
  if (2 * m > n) m -= n;
  return m;
}

// 5-dim relative position feature of key minus query. For polar grids every
// component is derived from integer index deltas, so shifting both indices by
// the same number of azimuth bins reproduces bit-identical values; the BEV
// offset is expressed in the query's radial/tangential frame for the same
// reason. wrap_n is the azimuth ring size in bins (padded extent).
void relpos5(const GridSpec& spec, const std::array<int, 3>& q,
             const std::array<int, 3>& k, int wrap_n, double out[5]) {
  if (const auto* g = std::get_if<PolarGridSpec>(&spec)) {
    const double dr = (k[0] - q[0]) * g->width_r();
    const double dth = wrap_delta(k[1] - q[1], wrap_n) * g->width_a();
    const double dz = (k[2] - q[2]) * g->width_z();
    const double rq = g->r_min + (q[0] + 0.5) * g->width_r();
    const double rk = g->r_min + (k[0] + 0.5) * g->width_r();
    out[0] = dr;
    out[1] = dth * 0.5 * (rq + rk);
    out[2] = dz;
    out[3] = rk * std::cos(dth) - rq;  // radial component of the BEV offset
    out[4] = rk * std::sin(dth);      // tangential component
    return;
  }
  const auto& c = std::get<CartesianGridSpec>(spec);
  const double dx = (k[0] - q[0]) * c.width_x();
  const double dy = (k[1] - q[1]) * c.width_y();
  const double dz = (k[2] - q[2]) * c.width_z();
  const CartPoint cq = c.voxel_center_unchecked(q[0], q[1], q[2]);
  const CartPoint ck = c.voxel_center_unchecked(k[0], k[1], k[2]);
  const PolarPoint pq = cart_to_polar(cq);
  const PolarPoint pk = cart_to_polar(ck);
  out[0] = pk.r - pq.r;
  out[1] = wrap_angle(pk.theta - pq.theta) * 0.5 * (pq.r + pk.r);
  out[2] = dz;
  out[3] = dx;
  out[4] = dy;
}

Array transpose2d(const Array& a) {
  Array t({a.extent(1), a.extent(0)});
  for (int i = 0; i < a.extent(0); ++i)
    for (int j = 0; j < a.extent(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// Dot-product attention with a relative positional bias. off5 is [nq, nk, 5].
Array attention_forward(const Array& xq, const Array& xkv, const Array& off5,
                        const AttnProjection& p, bool literal,
                        AttnCache* cache) {
  const int nq = xq.extent(0), nk = xkv.extent(0), C = xq.extent(1);
  Array q = matmul(xq, p.wq);
  Array k = matmul(xkv, p.wk);
  Array v = matmul(xkv, p.wv);
  Array bias_pre({nq, nk});
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < nk; ++j) {
      double acc = 0.0;
      for (int d = 0; d < 5; ++d) acc += off5.at(i, j, d) * p.wpos[d];
      bias_pre.at(i, j) = acc;
    }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(C));

  if (literal) {
    // Equation as printed: softmax applied after mixing with V; the
    // positional term enters as the per-query mean bias. Forward only.
    Array mixed = matmul(scale(matmul(q, transpose2d(k)), inv_sqrt), v);
    for (int i = 0; i < nq; ++i) {
      double mean_bias = 0.0;
      for (int j = 0; j < nk; ++j) mean_bias += std::max(0.0, bias_pre.at(i, j));
      mean_bias /= nk;
      for (int c = 0; c < C; ++c) mixed.at(i, c) += mean_bias;
    }
    return softmax(mixed);
  }

  Array scores({nq, nk});
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < nk; ++j) {
      double acc = 0.0;
      for (int c = 0; c < C; ++c) acc += q.at(i, c) * k.at(j, c);
      scores.at(i, j) = acc * inv_sqrt + std::max(0.0, bias_pre.at(i, j));
    }
  Array weights = softmax(scores);
  Array out = matmul(weights, v);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->off5 = off5;
    cache->bias_pre = std::move(bias_pre);
    cache->weights = std::move(weights);
  }
  return out;
}

void attention_backward(const AttnProjection& p, const AttnCache& c,
                        const Array& dout, Array& dxq, Array& dxkv,
                        AttnProjection& dp) {
  const int nq = c.q.extent(0), nk = c.k.extent(0), C = c.q.extent(1);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(C));

  Array dweights({nq, nk});
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < nk; ++j) {
      double acc = 0.0;
      for (int ch = 0; ch < C; ++ch) acc += dout.at(i, ch) * c.v.at(j, ch);
      dweights.at(i, j) = acc;
    }
  Array dv({nk, C});
  for (int j = 0; j < nk; ++j)
    for (int ch = 0; ch < C; ++ch) {
      double acc = 0.0;
      for (int i = 0; i < nq; ++i) acc += c.weights.at(i, j) * dout.at(i, ch);
      dv.at(j, ch) = acc;
    }

  Array dscores = softmax_backward(c.weights, dweights);

  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < nk; ++j) {
      if (c.bias_pre.at(i, j) > 0.0) {
        const double g = dscores.at(i, j);
        for (int d = 0; d < 5; ++d) dp.wpos[d] += g * c.off5.at(i, j, d);
      }
    }

  Array dq({nq, C});
  Array dk({nk, C});
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < nk; ++j) {
      const double g = dscores.at(i, j) * inv_sqrt;
      if (g == 0.0) continue;
      for (int ch = 0; ch < C; ++ch) {
        dq.at(i, ch) += g * c.k.at(j, ch);
        dk.at(j, ch) += g * c.q.at(i, ch);
      }
    }

  matmul_backward(c.xq, p.wq, dq, dxq, dp.wq);
  matmul_backward(c.xkv, p.wk, dk, dxkv, dp.wk);
  matmul_backward(c.xkv, p.wv, dv, dxkv, dp.wv);
}

Array pad_to_windows(const Array& x, int S, std::array<int, 3>* pad_lo,
                     std::array<int, 3>* padded) {
  const std::array<int, 3> ext = {x.extent(0), x.extent(1), x.extent(2)};
  const int C = x.extent(3);
  for (int ax = 0; ax < 3; ++ax) {
    const int total = (S - ext[ax] % S) % S;
    (*pad_lo)[ax] = total / 2;
    (*padded)[ax] = ext[ax] + total;
  }
  if (*padded == ext) return x;
  Array out({(*padded)[0], (*padded)[1], (*padded)[2], C});
  for (int r = 0; r < ext[0]; ++r)
    for (int a = 0; a < ext[1]; ++a)
      for (int z = 0; z < ext[2]; ++z) {
        const double* src =
            x.data() + ((static_cast<int64_t>(r) * ext[1] + a) * ext[2] + z) * C;
        double* dst = out.data() +
                      ((static_cast<int64_t>(r + (*pad_lo)[0]) * (*padded)[1] +
                        (a + (*pad_lo)[1])) *
                           (*padded)[2] +
                       (z + (*pad_lo)[2])) *
                          C;
        std::copy(src, src + C, dst);
      }
  return out;
}

struct WindowGeom {
  std::array<int, 3> bins;    // condensed extents
  std::array<int, 3> padded;  // padded full-res extents
  std::array<int, 3> pad_lo;
  int S = 1;

  int64_t n_windows() const {
    return static_cast<int64_t>(bins[0]) * bins[1] * bins[2];
  }
  std::array<int, 3> window_of(int64_t id) const {
    return {static_cast<int>(id / (bins[1] * bins[2])),
            static_cast<int>((id / bins[2]) % bins[1]),
            static_cast<int>(id % bins[2])};
  }
  // Padded flat positions of a window's voxels, local row-major order.
  void voxel_flats(int64_t id, std::vector<int64_t>* flats,
                   std::vector<std::array<int, 3>>* orig_idx) const {
    const auto w = window_of(id);
    flats->clear();
    if (orig_idx) orig_idx->clear();
    for (int lr = 0; lr < S; ++lr)
      for (int la = 0; la < S; ++la)
        for (int lz = 0; lz < S; ++lz) {
          const int pr = w[0] * S + lr, pa = w[1] * S + la, pz = w[2] * S + lz;
          flats->push_back(
              (static_cast<int64_t>(pr) * padded[1] + pa) * padded[2] + pz);
          if (orig_idx) {
            orig_idx->push_back(
                {pr - pad_lo[0], pa - pad_lo[1], pz - pad_lo[2]});
          }
        }
  }
};

Array gather_rows(const Array& src, const std::vector<int64_t>& flats, int C) {
  Array out({static_cast<int>(flats.size()), C});
  for (size_t i = 0; i < flats.size(); ++i) {
    const double* s = src.data() + flats[i] * C;
    std::copy(s, s + C, out.data() + static_cast<int64_t>(i) * C);
  }
  return out;
}

void scatter_rows_add(Array& dst, const std::vector<int64_t>& flats,
                      const Array& rows, int C) {
  for (size_t i = 0; i < flats.size(); ++i) {
    double* d = dst.data() + flats[i] * C;
    const double* s = rows.data() + static_cast<int64_t>(i) * C;
    for (int c = 0; c < C; ++c) d[c] += s[c];
  }
}

WindowGeom geom_of(const CondensedVolume& cond) {
  return {cond.bins, cond.padded, cond.pad_lo, cond.window};
}

// Canonical enumeration of a ring around position i: self, then alternating
// +-1, +-2, ... Summation in this order is invariant under ring rotations,
// which keeps the azimuth attention pass bitwise rotation-equivariant.
std::vector<int> ring_order(int i, int len) {
  std::vector<int> out;
  out.reserve(len);
  out.push_back(i);
  for (int d = 1; 2 * d <= len; ++d) {
    out.push_back((i + d) % len);
    if (2 * d != len) out.push_back(((i - d) % len + len) % len);
  }
  return out;
}

void check_projection(const AttnProjection& p, int C) {
  if (p.wq.rank() != 2 || p.wq.extent(0) != C || p.wq.extent(1) != C ||
      !p.wq.same_shape(p.wk) || !p.wq.same_shape(p.wv) ||
      p.wpos.numel() != 5) {
    throw_config("attention projection shapes inconsistent with channels " +
                 std::to_string(C));
  }
}

// Key windows for reverse propagation: own window plus face-adjacent ones,
// clipped on non-circular axes, wrapped on the azimuth axis, deduplicated.
std::vector<int64_t> neighbor_windows(const WindowGeom& g, int64_t id,
                                      bool wrap_azimuth) {
  const auto w = g.window_of(id);
  std::vector<int64_t> out;
  auto push = [&](int r, int a, int z) {
    if (r < 0 || r >= g.bins[0] || z < 0 || z >= g.bins[2]) return;
    if (a < 0 || a >= g.bins[1]) {
      if (!wrap_azimuth) return;
      a = (a % g.bins[1] + g.bins[1]) % g.bins[1];
    }
    const int64_t f = (static_cast<int64_t>(r) * g.bins[1] + a) * g.bins[2] + z;
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  };
  push(w[0], w[1], w[2]);
  push(w[0] - 1, w[1], w[2]);
  push(w[0] + 1, w[1], w[2]);
  push(w[0], w[1] - 1, w[2]);
  push(w[0], w[1] + 1, w[2]);
  push(w[0], w[1], w[2] - 1);
  push(w[0], w[1], w[2] + 1);
  return out;
}

}  // namespace

GrpParams make_grp_params(int channels, int window) {
  GrpParams p;
  p.window = window;
  auto mk = [&]() {
    AttnProjection a;
    a.wq = Array({channels, channels});
    a.wk = Array({channels, channels});
    a.wv = Array({channels, channels});
    a.wpos = Array({5});
    return a;
  };
  p.condense = mk();
  for (auto& a : p.axial) a = mk();
  p.reverse = mk();
  return p;
}

MaxselResult maxsel(const Array& window) {
  if (window.rank() != 4) throw_shape("maxsel expects a rank-4 window");
  const int C = window.extent(3);
  const int64_t n = window.numel() / C;
  if (n < 1) throw_shape("maxsel window must be nonempty");
  int64_t best = 0;
  double best_norm = -1.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* f = window.data() + i * C;
    double norm = 0.0;
    for (int c = 0; c < C; ++c) norm += f[c] * f[c];
    if (norm > best_norm) {  // strict: ties keep the lowest flat index
      best_norm = norm;
      best = i;
    }
  }
  MaxselResult res;
  res.feature = Array({C});
  const double* f = window.data() + best * C;
  std::copy(f, f + C, res.feature.data());
  res.index = static_cast<int>(best);
  return res;
}

void CondensedVolume::rep_centers(int64_t window_id, PolarPoint* polar,
                                  CartPoint* cart) const {
  const auto& idx = rep_index.at(window_id);
  grid_voxel_centers(spec, idx[0], idx[1], idx[2], polar, cart);
}

CondensedVolume local_condense_attention(const FeatureVolume& f,
                                         const GrpParams& params,
                                         GrpCache* cache) {
  const int S = params.window;
  if (S < 1) throw_config("grp window must be >= 1");
  const int C = f.channels;
  check_projection(params.condense, C);

  CondensedVolume cond;
  cond.spec = f.spec;
  cond.window = S;
  cond.channels = C;
  cond.full_bins = f.bins();
  Array padded = pad_to_windows(f.data, S, &cond.pad_lo, &cond.padded);
  for (int ax = 0; ax < 3; ++ax) cond.bins[ax] = cond.padded[ax] / S;
  cond.data = Array({cond.bins[0], cond.bins[1], cond.bins[2], C});
  cond.rep_index.resize(static_cast<size_t>(cond.bins[0]) * cond.bins[1] *
                        cond.bins[2]);

  WindowGeom geom{cond.bins, cond.padded, cond.pad_lo, S};
  std::vector<int64_t> flats;
  std::vector<std::array<int, 3>> orig;
  const int nk = S * S * S;

  for (int64_t w = 0; w < geom.n_windows(); ++w) {
    geom.voxel_flats(w, &flats, &orig);
    Array xkv = gather_rows(padded, flats, C);

    // maxsel: highest L2 norm, ties to the lowest flat index.
    int sel = 0;
    double best = -1.0;
    for (int j = 0; j < nk; ++j) {
      double norm = 0.0;
      const double* row = xkv.data() + static_cast<int64_t>(j) * C;
      for (int c = 0; c < C; ++c) norm += row[c] * row[c];
      if (norm > best) {
        best = norm;
        sel = j;
      }
    }
    cond.rep_index[w] = orig[sel];

    Array xq({1, C});
    std::copy(xkv.data() + static_cast<int64_t>(sel) * C,
              xkv.data() + static_cast<int64_t>(sel + 1) * C, xq.data());

    Array off5({1, nk, 5});
    for (int j = 0; j < nk; ++j) {
      relpos5(f.spec, orig[sel], orig[j], cond.padded[1],
              off5.data() + static_cast<int64_t>(j) * 5);
    }

    AttnCache* ac = nullptr;
    if (cache) {
      cache->condense.emplace_back();
      ac = &cache->condense.back();
    }
    Array out =
        attention_forward(xq, xkv, off5, params.condense, params.literal_eq, ac);
    std::copy(out.data(), out.data() + C, cond.data.data() + w * C);
  }
  if (cache) {
    cache->padded = std::move(padded);
    cache->cond0 = cond;
  }
  return cond;
}

CondensedVolume global_decomposed_attention(const CondensedVolume& cond,
                                            const GrpParams& params,
                                            GrpCache* cache) {
  const int C = cond.channels;
  for (const auto& a : params.axial) check_projection(a, C);
  const auto& b = cond.bins;
  Array data = cond.data;

  for (int pass = 0; pass < 3; ++pass) {
    if (cache) cache->axial_input[pass] = data;
    Array next = data;
    const int L = b[pass];
    // Strips vary the pass axis; iterate over the two fixed axes.
    const int o1 = pass == 0 ? 1 : 0;
    const int o2 = pass == 2 ? 1 : 2;
    std::vector<int64_t> flats(L);
    for (int i = 0; i < b[o1]; ++i) {
      for (int j = 0; j < b[o2]; ++j) {
        std::array<int, 3> idx{};
        idx[o1] = i;
        idx[o2] = j;
        for (int l = 0; l < L; ++l) {
          idx[pass] = l;
          flats[l] =
              (static_cast<int64_t>(idx[0]) * b[1] + idx[1]) * b[2] + idx[2];
        }
        Array x = gather_rows(data, flats, C);
        Array off5({L, L, 5});
        for (int qi = 0; qi < L; ++qi)
          for (int ki = 0; ki < L; ++ki) {
            relpos5(cond.spec, cond.rep_index[flats[qi]],
                    cond.rep_index[flats[ki]], cond.padded[1],
                    off5.data() + (static_cast<int64_t>(qi) * L + ki) * 5);
          }
        AttnCache* ac = nullptr;
        if (cache) {
          cache->axial[pass].emplace_back();
          ac = &cache->axial[pass].back();
        }
        Array out = attention_forward(x, x, off5, params.axial[pass],
                                      params.literal_eq, ac);
        axpy(1.0, x, out);  // residual
        for (int l = 0; l < L; ++l) {
          std::copy(out.data() + static_cast<int64_t>(l) * C,
                    out.data() + static_cast<int64_t>(l + 1) * C,
                    next.data() + flats[l] * C);
        }
      }
    }
    data = std::move(next);
  }

  CondensedVolume out = cond;
  out.data = data;
  if (cache) cache->cond_final = std::move(data);
  return out;
}

FeatureVolume reverse_propagate(const FeatureVolume& f,
                                const CondensedVolume& cond,
                                const GrpParams& params, GrpCache* cache) {
  const int C = f.channels;
  check_projection(params.reverse, C);
  const auto full = f.bins();
  for (int ax = 0; ax < 3; ++ax) {
    if ((full[ax] + cond.window - 1) / cond.window != cond.bins[ax]) {
      throw_config("reverse_propagate: condensed extents do not match input");
    }
  }

  std::array<int, 3> pad_lo{}, padded{};
  Array pad = (cache && cache->padded.numel() > 0)
                  ? cache->padded
                  : pad_to_windows(f.data, cond.window, &pad_lo, &padded);
  Array result = pad;

  WindowGeom geom = geom_of(cond);
  const bool wrap = grid_axis_wraps(f.spec, 1);
  std::vector<int64_t> flats;
  std::vector<std::array<int, 3>> orig;

  for (int64_t w = 0; w < geom.n_windows(); ++w) {
    const auto keys = neighbor_windows(geom, w, wrap);
    Array xkv({static_cast<int>(keys.size()), C});
    for (size_t j = 0; j < keys.size(); ++j) {
      std::copy(cond.data.data() + keys[j] * C,
                cond.data.data() + (keys[j] + 1) * C,
                xkv.data() + static_cast<int64_t>(j) * C);
    }
    geom.voxel_flats(w, &flats, &orig);
    Array xq = gather_rows(pad, flats, C);
    const int nq = xq.extent(0), nk = xkv.extent(0);
    Array off5({nq, nk, 5});
    for (int qi = 0; qi < nq; ++qi)
      for (int ki = 0; ki < nk; ++ki) {
        relpos5(f.spec, orig[qi], cond.rep_index[keys[ki]], cond.padded[1],
                off5.data() + (static_cast<int64_t>(qi) * nk + ki) * 5);
      }
    AttnCache* ac = nullptr;
    if (cache) {
      cache->reverse.emplace_back();
      cache->reverse_keys.push_back(keys);
      ac = &cache->reverse.back();
    }
    Array out =
        attention_forward(xq, xkv, off5, params.reverse, params.literal_eq, ac);
    scatter_rows_add(result, flats, out, C);
  }

  // Crop the pad halo away.
  FeatureVolume res = FeatureVolume::zeros(f.spec, C);
  for (int r = 0; r < full[0]; ++r)
    for (int a = 0; a < full[1]; ++a)
      for (int z = 0; z < full[2]; ++z) {
        const double* src =
            result.data() +
            ((static_cast<int64_t>(r + cond.pad_lo[0]) * cond.padded[1] +
              (a + cond.pad_lo[1])) *
                 cond.padded[2] +
             (z + cond.pad_lo[2])) *
                C;
        double* dst =
            res.data.data() +
            ((static_cast<int64_t>(r) * full[1] + a) * full[2] + z) * C;
        std::copy(src, src + C, dst);
      }
  return res;
}

FeatureVolume grp_forward(const FeatureVolume& f, const GrpParams& params,
                          GrpCache* cache) {
  CondensedVolume cond = local_condense_attention(f, params, cache);
  CondensedVolume mixed = global_decomposed_attention(cond, params, cache);
  return reverse_propagate(f, mixed, params, cache);
}

void grp_backward(const FeatureVolume& f, const GrpParams& params,
                  const GrpCache& cache, const Array& dout, Array& dinput,
                  GrpParams& dparams) {
  if (params.literal_eq) {
    throw_config("grp_backward does not support literal_eq mode");
  }
  const int C = f.channels;
  const CondensedVolume& cond = cache.cond0;
  WindowGeom geom = geom_of(cond);
  const auto full = f.bins();

  // Upstream into the padded frame; the residual path flows straight through.
  Array dpad_up({cond.padded[0], cond.padded[1], cond.padded[2], C});
  for (int r = 0; r < full[0]; ++r)
    for (int a = 0; a < full[1]; ++a)
      for (int z = 0; z < full[2]; ++z) {
        const double* src =
            dout.data() +
            ((static_cast<int64_t>(r) * full[1] + a) * full[2] + z) * C;
        double* dst =
            dpad_up.data() +
            ((static_cast<int64_t>(r + cond.pad_lo[0]) * cond.padded[1] +
              (a + cond.pad_lo[1])) *
                 cond.padded[2] +
             (z + cond.pad_lo[2])) *
                C;
        std::copy(src, src + C, dst);
      }
  Array dpad = dpad_up;  // residual contribution

  // Reverse propagation backward.
  Array dcond({cond.bins[0], cond.bins[1], cond.bins[2], C});
  std::vector<int64_t> flats;
  for (int64_t w = 0; w < geom.n_windows(); ++w) {
    geom.voxel_flats(w, &flats, nullptr);
    Array g = gather_rows(dpad_up, flats, C);
    const AttnCache& ac = cache.reverse.at(w);
    Array dxq({ac.xq.extent(0), C});
    Array dxkv({ac.xkv.extent(0), C});
    attention_backward(params.reverse, ac, g, dxq, dxkv, dparams.reverse);
    scatter_rows_add(dpad, flats, dxq, C);
    const auto& keys = cache.reverse_keys.at(w);
    for (size_t j = 0; j < keys.size(); ++j) {
      double* d = dcond.data() + keys[j] * C;
      const double* s = dxkv.data() + static_cast<int64_t>(j) * C;
      for (int c = 0; c < C; ++c) d[c] += s[c];
    }
  }

  // Axial passes backward, in reverse order.
  const auto& b = cond.bins;
  for (int pass = 2; pass >= 0; --pass) {
    Array dnext = dcond;  // residual path
    const int L = b[pass];
    const int o1 = pass == 0 ? 1 : 0;
    const int o2 = pass == 2 ? 1 : 2;
    std::vector<int64_t> sflats(L);
    size_t strip = 0;
    for (int i = 0; i < b[o1]; ++i) {
      for (int j = 0; j < b[o2]; ++j, ++strip) {
        std::array<int, 3> idx{};
        idx[o1] = i;
        idx[o2] = j;
        for (int l = 0; l < L; ++l) {
          idx[pass] = l;
          sflats[l] =
              (static_cast<int64_t>(idx[0]) * b[1] + idx[1]) * b[2] + idx[2];
        }
        Array g = gather_rows(dcond, sflats, C);
        const AttnCache& ac = cache.axial[pass].at(strip);
        Array dx({L, C});
        attention_backward(params.axial[pass], ac, g, dx, dx,
                           dparams.axial[pass]);
        scatter_rows_add(dnext, sflats, dx, C);
      }
    }
    dcond = std::move(dnext);
  }

  // Condense backward.
  std::vector<std::array<int, 3>> orig;
  for (int64_t w = 0; w < geom.n_windows(); ++w) {
    geom.voxel_flats(w, &flats, &orig);
    Array g({1, C});
    std::copy(dcond.data() + w * C, dcond.data() + (w + 1) * C, g.data());
    const AttnCache& ac = cache.condense.at(w);
    Array dxq({1, C});
    Array dxkv({static_cast<int>(flats.size()), C});
    attention_backward(params.condense, ac, g, dxq, dxkv, dparams.condense);
    scatter_rows_add(dpad, flats, dxkv, C);
    // The query was the selected voxel's feature row.
    const auto& rep = cond.rep_index.at(w);
    const int64_t sel_flat =
        (static_cast<int64_t>(rep[0] + cond.pad_lo[0]) * cond.padded[1] +
         (rep[1] + cond.pad_lo[1])) *
            cond.padded[2] +
        (rep[2] + cond.pad_lo[2]);
    double* d = dpad.data() + sel_flat * C;
    for (int c = 0; c < C; ++c) d[c] += dxq[c];
  }

  // Crop the pad halo.
  for (int r = 0; r < full[0]; ++r)
    for (int a = 0; a < full[1]; ++a)
      for (int z = 0; z < full[2]; ++z) {
        const double* src =
            dpad.data() +
            ((static_cast<int64_t>(r + cond.pad_lo[0]) * cond.padded[1] +
              (a + cond.pad_lo[1])) *
                 cond.padded[2] +
             (z + cond.pad_lo[2])) *
                C;
        double* dst =
            dinput.data() +
            ((static_cast<int64_t>(r) * full[1] + a) * full[2] + z) * C;
        for (int c = 0; c < C; ++c) dst[c] += src[c];
      }
}

}  // namespace pvo
