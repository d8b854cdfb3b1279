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
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "pvo/array.hpp"
#include "pvo/rng.hpp"

using namespace pvo;

namespace {

Array random_array(std::vector<int> shape, uint64_t seed, double lo = -1.0,
                   double hi = 1.0) {
  Array a(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

// Independent triple-loop oracle.
Array naive_matmul(const Array& a, const Array& b) {
  const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Array c({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  return c;
}

// Independent direct-summation oracle, 7 nested loops.
Array naive_conv3d(const Array& in, const Array& k, const ConvPadding& pad) {
  const int R = in.extent(0), A = in.extent(1), Z = in.extent(2);
  const int Ci = in.extent(3), Co = k.extent(4);
  const int kr = k.extent(0), ka = k.extent(1), kz = k.extent(2);
  Array out({R, A, Z, Co});
  auto fetch = [&](int r, int a, int z, int ci) -> double {
    auto idx = [&](int v, int n, Pad p, bool* ok) {
      if (v >= 0 && v < n) return v;
      if (p == Pad::kZero) {
        *ok = false;
        return 0;
      }
      return ((v % n) + n) % n;
    };
    bool ok = true;
    const int rr = idx(r, R, pad.r, &ok);
    const int aa = idx(a, A, pad.a, &ok);
    const int zz = idx(z, Z, pad.z, &ok);
    return ok ? in.at(rr, aa, zz, ci) : 0.0;
  };
  auto kval = [&](int ir, int ia, int iz, int ci, int co) {
    return k[((((static_cast<int64_t>(ir) * ka + ia) * kz + iz) * Ci + ci) *
              Co) +
             co];
  };
  for (int r = 0; r < R; ++r)
    for (int a = 0; a < A; ++a)
      for (int z = 0; z < Z; ++z)
        for (int co = 0; co < Co; ++co) {
          double acc = 0.0;
          for (int ir = 0; ir < kr; ++ir)
            for (int ia = 0; ia < ka; ++ia)
              for (int iz = 0; iz < kz; ++iz)
                for (int ci = 0; ci < Ci; ++ci) {
                  acc += fetch(r + ir - kr / 2, a + ia - ka / 2,
                               z + iz - kz / 2, ci) *
                         kval(ir, ia, iz, ci, co);
                }
          out.at(r, a, z, co) = acc;
        }
  return out;
}

double sum_weighted(const Array& a, const Array& w) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a[i] * w[i];
  return acc;
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul identity and hand products") {
  Array i2 = Array::from({2, 2}, {1, 0, 0, 1});
  Array m = Array::from({2, 2}, {1, 2, 3, 4});
  Array r = matmul(i2, m);
  for (int64_t i = 0; i < 4; ++i) CHECK(r[i] == m[i]);

  Array a = Array::from({1, 2}, {1, 2});
  Array b = Array::from({2, 1}, {3, 4});
  CHECK(matmul(a, b).at(0, 0) == doctest::Approx(11.0).epsilon(1e-15));

  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    Array a = random_array({3, 4}, 100 + seed);
    Array b = random_array({4, 2}, 200 + seed);
    Array got = matmul(a, b);
    Array want = naive_matmul(a, b);
    CHECK(max_rel_error(got, want) <= 1e-12);
  }
}

TEST_CASE("matmul backward matches finite differences") {
  Array a = random_array({3, 4}, 1);
  Array b = random_array({4, 2}, 2);
  Array w = random_array({3, 2}, 3);
  Array da({3, 4}), db({4, 2});
  matmul_backward(a, b, w, da, db);

  Array fa = finite_diff_grad(
      [&](const Array& x) { return sum_weighted(matmul(x, b), w); }, a);
  Array fb = finite_diff_grad(
      [&](const Array& x) { return sum_weighted(matmul(a, x), w); }, b);
  CHECK(max_rel_error(da, fa) <= 1e-4);
  CHECK(max_rel_error(db, fb) <= 1e-4);
}

TEST_CASE("softmax closed forms") {
  Array flat = softmax(Array::from({3}, {0, 0, 0}));
  for (int i = 0; i < 3; ++i) {
    CHECK(flat[i] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }

  Array dom = softmax(Array::from({2}, {1000, 0}));
  CHECK(std::abs(dom[0] - 1.0) <= 1e-12);
  CHECK(std::abs(dom[1]) <= 1e-12);

  Array logs = softmax(Array::from(
      {3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(logs[0] == doctest::Approx(1.0 / 6).epsilon(1e-13));
  CHECK(logs[1] == doctest::Approx(2.0 / 6).epsilon(1e-13));
  CHECK(logs[2] == doctest::Approx(3.0 / 6).epsilon(1e-13));

  Array nan_in = Array::from({2}, {std::nan(""), 0.0});
  CHECK_THROWS_AS(softmax(nan_in), Error);
}

TEST_CASE("softmax rows sum to one for magnitudes up to 1e3") {
  for (uint64_t seed = 0; seed < 16; ++seed) {
    Array x = random_array({4, 7}, 300 + seed, -1e3, 1e3);
    Array y = softmax(x);
    for (int i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 7; ++j) {
        CHECK(y.at(i, j) >= 0.0);
        sum += y.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax backward matches finite differences") {
  Array x = random_array({2, 5}, 42);
  Array w = random_array({2, 5}, 43);
  Array y = softmax(x);
  Array dx = softmax_backward(y, w);
  Array fd = finite_diff_grad(
      [&](const Array& v) { return sum_weighted(softmax(v), w); }, x, 1e-5);
  CHECK(max_rel_error(dx, fd) <= 1e-4);
}

TEST_CASE("relu forward and gate") {
  Array y = relu(Array::from({3}, {-1, 0, 2}));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);

  Array neg = relu(Array::from({4}, {-5, -1, -0.5, -2}));
  for (int i = 0; i < 4; ++i) CHECK(neg[i] == 0.0);

  Array g = relu_backward(Array::from({2}, {3, -3}), Array::from({2}, {5, 5}));
  CHECK(g[0] == 5.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("conv3d delta kernel is the identity") {
  const int C = 2;
  Array in = random_array({4, 5, 3, C}, 7);
  Array k({3, 3, 3, C, C});
  // Center tap, identity across channels.
  for (int c = 0; c < C; ++c) {
    k[(static_cast<int64_t>(13) * C + c) * C + c] = 1.0;
  }
  for (auto pad : {ConvPadding::all_zero(), ConvPadding::polar()}) {
    Array out = conv3d(in, k, pad);
    for (int64_t i = 0; i < in.numel(); ++i) CHECK(out[i] == in[i]);
  }
}

TEST_CASE("conv3d 1x1x1 scaling kernel") {
  Array in = random_array({3, 4, 2, 1}, 8);
  Array k = Array::from({1, 1, 1, 1, 1}, {2.0});
  Array out = conv3d(in, k, ConvPadding::all_zero());
  for (int64_t i = 0; i < in.numel(); ++i) {
    CHECK(out[i] == doctest::Approx(2.0 * in[i]).epsilon(1e-15));
  }
}

TEST_CASE("conv3d matches the direct-summation oracle") {
  for (auto pad : {ConvPadding::all_zero(), ConvPadding::polar(),
                   ConvPadding::all_wrap()}) {
    Array in = random_array({4, 5, 3, 2}, 9);
    Array k = random_array({3, 3, 3, 2, 1}, 10);
    Array got = conv3d(in, k, pad);
    Array want = naive_conv3d(in, k, pad);
    CHECK(max_rel_error(got, want) <= 1e-10);
  }
}

TEST_CASE("conv3d rejects even kernel extents") {
  Array in({2, 2, 2, 1});
  Array k({2, 3, 3, 1, 1});
  CHECK_THROWS_AS(conv3d(in, k, ConvPadding::all_zero()), Error);
}

TEST_CASE("conv3d is linear") {
  Array x = random_array({3, 4, 2, 2}, 11);
  Array y = random_array({3, 4, 2, 2}, 12);
  Array k = random_array({3, 3, 1, 2, 2}, 13);
  const double alpha = 0.7, beta = -1.3;
  ConvPadding pad = ConvPadding::polar();
  Array lhs = conv3d(add(scale(x, alpha), scale(y, beta)), k, pad);
  Array rhs = add(scale(conv3d(x, k, pad), alpha), scale(conv3d(y, k, pad), beta));
  CHECK(max_rel_error(lhs, rhs) <= 1e-12);
}

TEST_CASE("conv3d backward matches finite differences") {
  Array in = random_array({3, 4, 2, 2}, 21);
  Array k = random_array({3, 3, 3, 2, 2}, 22);
  Array w = random_array({3, 4, 2, 2}, 23);
  ConvPadding pad = ConvPadding::polar();
  Array din(in.shape()), dk(k.shape());
  conv3d_backward(in, k, pad, w, din, dk);

  Array fin = finite_diff_grad(
      [&](const Array& v) { return sum_weighted(conv3d(v, k, pad), w); }, in);
  Array fk = finite_diff_grad(
      [&](const Array& v) { return sum_weighted(conv3d(in, v, pad), w); }, k);
  CHECK(max_rel_error(din, fin) <= 1e-4);
  CHECK(max_rel_error(dk, fk) <= 1e-4);
}

TEST_CASE("serial convs equal a single conv with the composed kernel") {
  // Exact on a wrapped domain; zero padding matches away from the boundary.
  Array x = random_array({6, 6, 6, 2}, 31);
  Array k1 = random_array({1, 3, 3, 2, 3}, 32);
  Array k2 = random_array({3, 1, 3, 3, 2}, 33);
  Array k12 = compose_kernels(k1, k2);

  ConvPadding wrap = ConvPadding::all_wrap();
  Array chained = conv3d(conv3d(x, k1, wrap), k2, wrap);
  Array direct = conv3d(x, k12, wrap);
  CHECK(max_rel_error(chained, direct) <= 1e-10);

  ConvPadding zero = ConvPadding::all_zero();
  Array cz = conv3d(conv3d(x, k1, zero), k2, zero);
  Array dz = conv3d(x, k12, zero);
  // Composed halo reaches 2 bins; compare the interior.
  double worst = 0.0;
  for (int r = 2; r < 4; ++r)
    for (int a = 2; a < 4; ++a)
      for (int z = 2; z < 4; ++z)
        for (int c = 0; c < 2; ++c) {
          worst = std::max(worst, std::abs(cz.at(r, a, z, c) - dz.at(r, a, z, c)));
        }
  CHECK(worst <= 1e-10);
}

TEST_CASE("avg_pool3d forward/backward") {
  Array x = random_array({4, 6, 2, 3}, 41);
  Array y = avg_pool3d(x, 2, 2, 1);
  CHECK(y.shape() == std::vector<int>{2, 3, 2, 3});
  double mean = 0.25 * (x.at(0, 0, 0, 0) + x.at(0, 1, 0, 0) +
                        x.at(1, 0, 0, 0) + x.at(1, 1, 0, 0));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(mean).epsilon(1e-15));
  CHECK_THROWS_AS(avg_pool3d(x, 3, 1, 1), Error);

  Array w = random_array({2, 3, 2, 3}, 42);
  Array din = avg_pool3d_backward({4, 6, 2, 3}, 2, 2, 1, w);
  Array fd = finite_diff_grad(
      [&](const Array& v) { return sum_weighted(avg_pool3d(v, 2, 2, 1), w); },
      x);
  CHECK(max_rel_error(din, fd) <= 1e-4);
}

TEST_CASE("finite differences on closed forms") {
  Array x = Array::from({2}, {1, 2});
  Array g = finite_diff_grad(
      [](const Array& v) {
        double s = 0.0;
        for (int64_t i = 0; i < v.numel(); ++i) s += v[i] * v[i];
        return s;
      },
      x);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-6));

  Array zero = finite_diff_grad([](const Array&) { return 3.25; }, x);
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);

  CHECK_THROWS_AS(
      finite_diff_grad([](const Array&) { return std::nan(""); }, x), Error);
}

TEST_CASE("array serialization round-trips") {
  Array a = random_array({2, 3, 4}, 55);
  std::stringstream ss;
  write_array(ss, a);
  Array b = read_array(ss);
  CHECK(b.shape() == a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

  Array c = array_from_json(array_to_json(a));
  CHECK(c.shape() == a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == c[i]);

  std::stringstream bad("NOTMAGIC");
  CHECK_THROWS_AS(read_array(bad), Error);
}

TEST_CASE("array invariants") {
  CHECK_THROWS_AS(Array({0, 2}), Error);
  CHECK_THROWS_AS(Array({1, 2, 3, 4, 5, 6}), Error);
  CHECK_THROWS_AS(Array::from({2, 2}, {1, 2, 3}), Error);
  Array a({2, 2});
  CHECK(a.numel() == 4);
}

TEST_SUITE_END();
