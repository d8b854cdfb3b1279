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
#include "pvo/array.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace pvo {

namespace {

int64_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 5) {
    throw_shape("array rank must be 1..5, got rank " +
                std::to_string(shape.size()));
  }
  int64_t n = 1;
  for (int e : shape) {
    if (e < 1) throw_shape("array extents must be >= 1");
    n *= e;
  }
  return n;
}

}  // namespace

Array::Array(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
}

Array Array::full(std::vector<int> shape, double value) {
  Array a(std::move(shape));
  a.fill(value);
  return a;
}

Array Array::from(std::vector<int> shape, std::vector<double> data) {
  int64_t n = checked_numel(shape);
  if (n != static_cast<int64_t>(data.size())) {
    throw_shape("data length " + std::to_string(data.size()) +
                " does not match shape product " + std::to_string(n));
  }
  Array a;
  a.shape_ = std::move(shape);
  a.data_ = std::move(data);
  return a;
}

std::string Array::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

void Array::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Array::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void axpy(double alpha, const Array& x, Array& y) {
  if (!x.same_shape(y)) {
    throw_shape("axpy shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  }
  const double* xs = x.data();
  double* ys = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) ys[i] += alpha * xs[i];
}

Array add(const Array& a, const Array& b) {
  if (!a.same_shape(b)) {
    throw_shape("add shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Array c = a;
  axpy(1.0, b, c);
  return c;
}

Array scale(const Array& a, double alpha) {
  Array c = a;
  for (int64_t i = 0; i < c.numel(); ++i) c[i] *= alpha;
  return c;
}

Array matmul(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw_shape("matmul shape mismatch " + a.shape_str() + " * " + b.shape_str());
  }
  const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Array c({m, n});
  for (int i = 0; i < m; ++i) {
    const double* arow = a.data() + static_cast<int64_t>(i) * k;
    double* crow = c.data() + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.data() + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

void matmul_backward(const Array& a, const Array& b, const Array& dc,
                     Array& da, Array& db) {
  const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (dc.rank() != 2 || dc.extent(0) != m || dc.extent(1) != n) {
    throw_shape("matmul_backward upstream shape " + dc.shape_str());
  }
  // da += dc * b^T
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double acc = 0.0;
      const double* dcrow = dc.data() + static_cast<int64_t>(i) * n;
      const double* brow = b.data() + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      da.at(i, p) += acc;
    }
  }
  // db += a^T * dc
  for (int p = 0; p < k; ++p) {
    for (int i = 0; i < m; ++i) {
      const double av = a.at(i, p);
      const double* dcrow = dc.data() + static_cast<int64_t>(i) * n;
      double* dbrow = db.data() + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

Array softmax(const Array& x) {
  if (!x.all_finite()) throw_numeric("softmax input must be finite");
  const int n = x.extent(x.rank() - 1);
  const int64_t rows = x.numel() / n;
  Array y(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = y.data() + r * n;
    double mx = xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (int j = 0; j < n; ++j) yr[j] /= sum;
  }
  return y;
}

Array softmax_backward(const Array& y, const Array& g) {
  if (!y.same_shape(g)) {
    throw_shape("softmax_backward shape mismatch " + y.shape_str() + " vs " +
                g.shape_str());
  }
  const int n = y.extent(y.rank() - 1);
  const int64_t rows = y.numel() / n;
  Array dx(y.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* yr = y.data() + r * n;
    const double* gr = g.data() + r * n;
    double* dr = dx.data() + r * n;
    double dot = 0.0;
    for (int j = 0; j < n; ++j) dot += gr[j] * yr[j];
    for (int j = 0; j < n; ++j) dr[j] = yr[j] * (gr[j] - dot);
  }
  return dx;
}

Array relu(const Array& x) {
  Array y = x;
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::max(0.0, y[i]);
  return y;
}

Array relu_backward(const Array& x, const Array& g) {
  if (!x.same_shape(g)) {
    throw_shape("relu_backward shape mismatch " + x.shape_str() + " vs " +
                g.shape_str());
  }
  Array dx(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
  return dx;
}

namespace {

// Resolves an input coordinate under a padding mode; returns false when the
// coordinate falls into a zero pad.
inline bool resolve(int v, int n, Pad pad, int* out) {
  if (v >= 0 && v < n) {
    *out = v;
    return true;
  }
  if (pad == Pad::kZero) return false;
  int m = v % n;
  if (m < 0) m += n;
  *out = m;
  return true;
}

void check_conv_shapes(const Array& input, const Array& kernel) {
  if (input.rank() != 4 || kernel.rank() != 5) {
    throw_shape("conv3d expects input rank 4 and kernel rank 5, got " +
                input.shape_str() + " and " + kernel.shape_str());
  }
  for (int ax = 0; ax < 3; ++ax) {
    if (kernel.extent(ax) % 2 == 0) {
      throw_config("conv3d kernel extents must be odd, got " +
                   kernel.shape_str());
    }
  }
  if (kernel.extent(3) != input.extent(3)) {
    throw_shape("conv3d channel mismatch: input " + input.shape_str() +
                " vs kernel " + kernel.shape_str());
  }
}

}  // namespace

Array conv3d(const Array& input, const Array& kernel, const ConvPadding& pad) {
  check_conv_shapes(input, kernel);
  const int R = input.extent(0), A = input.extent(1), Z = input.extent(2);
  const int Ci = input.extent(3);
  const int kr = kernel.extent(0), ka = kernel.extent(1), kz = kernel.extent(2);
  const int Co = kernel.extent(4);
  const int cr = kr / 2, ca = ka / 2, cz = kz / 2;

  Array out({R, A, Z, Co});
  std::vector<double> acc(Co);
  for (int r = 0; r < R; ++r) {
    for (int a = 0; a < A; ++a) {
      for (int z = 0; z < Z; ++z) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int ir = 0; ir < kr; ++ir) {
          int rr;
          if (!resolve(r + ir - cr, R, pad.r, &rr)) continue;
          for (int ia = 0; ia < ka; ++ia) {
            int aa;
            if (!resolve(a + ia - ca, A, pad.a, &aa)) continue;
            for (int iz = 0; iz < kz; ++iz) {
              int zz;
              if (!resolve(z + iz - cz, Z, pad.z, &zz)) continue;
              const double* in_ptr =
                  input.data() +
                  ((static_cast<int64_t>(rr) * A + aa) * Z + zz) * Ci;
              const double* k_ptr =
                  kernel.data() +
                  ((static_cast<int64_t>(ir) * ka + ia) * kz + iz) * Ci * Co;
              for (int ci = 0; ci < Ci; ++ci) {
                const double v = in_ptr[ci];
                const double* krow = k_ptr + static_cast<int64_t>(ci) * Co;
                for (int co = 0; co < Co; ++co) acc[co] += v * krow[co];
              }
            }
          }
        }
        double* out_ptr =
            out.data() + ((static_cast<int64_t>(r) * A + a) * Z + z) * Co;
        for (int co = 0; co < Co; ++co) out_ptr[co] = acc[co];
      }
    }
  }
  return out;
}

void conv3d_backward(const Array& input, const Array& kernel,
                     const ConvPadding& pad, const Array& dout,
                     Array& dinput, Array& dkernel) {
  check_conv_shapes(input, kernel);
  const int R = input.extent(0), A = input.extent(1), Z = input.extent(2);
  const int Ci = input.extent(3);
  const int kr = kernel.extent(0), ka = kernel.extent(1), kz = kernel.extent(2);
  const int Co = kernel.extent(4);
  const int cr = kr / 2, ca = ka / 2, cz = kz / 2;
  if (dout.rank() != 4 || dout.extent(0) != R || dout.extent(1) != A ||
      dout.extent(2) != Z || dout.extent(3) != Co) {
    throw_shape("conv3d_backward upstream shape " + dout.shape_str());
  }

  // dinput as a gather: the output position using input p at offset o is
  // q = p - (o - c), subject to the same padding rules.
  for (int r = 0; r < R; ++r) {
    for (int a = 0; a < A; ++a) {
      for (int z = 0; z < Z; ++z) {
        double* din_ptr =
            dinput.data() + ((static_cast<int64_t>(r) * A + a) * Z + z) * Ci;
        for (int ir = 0; ir < kr; ++ir) {
          int qr;
          if (!resolve(r - (ir - cr), R, pad.r, &qr)) continue;
          for (int ia = 0; ia < ka; ++ia) {
            int qa;
            if (!resolve(a - (ia - ca), A, pad.a, &qa)) continue;
            for (int iz = 0; iz < kz; ++iz) {
              int qz;
              if (!resolve(z - (iz - cz), Z, pad.z, &qz)) continue;
              const double* dout_ptr =
                  dout.data() +
                  ((static_cast<int64_t>(qr) * A + qa) * Z + qz) * Co;
              const double* k_ptr =
                  kernel.data() +
                  ((static_cast<int64_t>(ir) * ka + ia) * kz + iz) * Ci * Co;
              for (int ci = 0; ci < Ci; ++ci) {
                double acc = 0.0;
                const double* krow = k_ptr + static_cast<int64_t>(ci) * Co;
                for (int co = 0; co < Co; ++co) acc += dout_ptr[co] * krow[co];
                din_ptr[ci] += acc;
              }
            }
          }
        }
      }
    }
  }

  // dkernel: serial accumulation over output positions per kernel tap.
  for (int ir = 0; ir < kr; ++ir) {
    for (int ia = 0; ia < ka; ++ia) {
      for (int iz = 0; iz < kz; ++iz) {
        double* dk_ptr =
            dkernel.data() +
            ((static_cast<int64_t>(ir) * ka + ia) * kz + iz) * Ci * Co;
        for (int r = 0; r < R; ++r) {
          int rr;
          if (!resolve(r + ir - cr, R, pad.r, &rr)) continue;
          for (int a = 0; a < A; ++a) {
            int aa;
            if (!resolve(a + ia - ca, A, pad.a, &aa)) continue;
            for (int z = 0; z < Z; ++z) {
              int zz;
              if (!resolve(z + iz - cz, Z, pad.z, &zz)) continue;
              const double* in_ptr =
                  input.data() +
                  ((static_cast<int64_t>(rr) * A + aa) * Z + zz) * Ci;
              const double* dout_ptr =
                  dout.data() + ((static_cast<int64_t>(r) * A + a) * Z + z) * Co;
              for (int ci = 0; ci < Ci; ++ci) {
                const double v = in_ptr[ci];
                double* dkrow = dk_ptr + static_cast<int64_t>(ci) * Co;
                for (int co = 0; co < Co; ++co) dkrow[co] += v * dout_ptr[co];
              }
            }
          }
        }
      }
    }
  }
}

Array compose_kernels(const Array& k1, const Array& k2) {
  if (k1.rank() != 5 || k2.rank() != 5 || k1.extent(4) != k2.extent(3)) {
    throw_shape("compose_kernels channel mismatch " + k1.shape_str() + " then " +
                k2.shape_str());
  }
  const int e0 = k1.extent(0) + k2.extent(0) - 1;
  const int e1 = k1.extent(1) + k2.extent(1) - 1;
  const int e2 = k1.extent(2) + k2.extent(2) - 1;
  const int Ci = k1.extent(3), Cm = k1.extent(4), Co = k2.extent(4);
  Array k({e0, e1, e2, Ci, Co});
  // Offset algebra: applying k1 at offset u then k2 at offset v reaches input
  // offset u + v relative to the composed center.
  for (int r1 = 0; r1 < k1.extent(0); ++r1)
    for (int a1 = 0; a1 < k1.extent(1); ++a1)
      for (int z1 = 0; z1 < k1.extent(2); ++z1)
        for (int r2 = 0; r2 < k2.extent(0); ++r2)
          for (int a2 = 0; a2 < k2.extent(1); ++a2)
            for (int z2 = 0; z2 < k2.extent(2); ++z2) {
              const int r = r1 + r2, a = a1 + a2, z = z1 + z2;
              for (int ci = 0; ci < Ci; ++ci)
                for (int cm = 0; cm < Cm; ++cm) {
                  const double v1 =
                      k1.data()[((static_cast<int64_t>(r1) * k1.extent(1) + a1) *
                                     k1.extent(2) +
                                 z1) *
                                    Ci * Cm +
                                static_cast<int64_t>(ci) * Cm + cm];
                  if (v1 == 0.0) continue;
                  for (int co = 0; co < Co; ++co) {
                    const double v2 =
                        k2.data()[((static_cast<int64_t>(r2) * k2.extent(1) + a2) *
                                       k2.extent(2) +
                                   z2) *
                                      Cm * Co +
                                  static_cast<int64_t>(cm) * Co + co];
                    k.data()[((static_cast<int64_t>(r) * e1 + a) * e2 + z) * Ci *
                                 Co +
                             static_cast<int64_t>(ci) * Co + co] += v1 * v2;
                  }
                }
            }
  return k;
}

Array avg_pool3d(const Array& input, int sr, int sa, int sz) {
  if (input.rank() != 4) throw_shape("avg_pool3d expects rank 4");
  const int R = input.extent(0), A = input.extent(1), Z = input.extent(2);
  const int C = input.extent(3);
  if (sr < 1 || sa < 1 || sz < 1 || R % sr || A % sa || Z % sz) {
    throw_config("avg_pool3d strides (" + std::to_string(sr) + "," +
                 std::to_string(sa) + "," + std::to_string(sz) +
                 ") must divide extents " + input.shape_str());
  }
  const int Ro = R / sr, Ao = A / sa, Zo = Z / sz;
  const double inv = 1.0 / (sr * sa * sz);
  Array out({Ro, Ao, Zo, C});
  for (int r = 0; r < Ro; ++r)
    for (int a = 0; a < Ao; ++a)
      for (int z = 0; z < Zo; ++z) {
        double* out_ptr =
            out.data() + ((static_cast<int64_t>(r) * Ao + a) * Zo + z) * C;
        for (int dr = 0; dr < sr; ++dr)
          for (int da = 0; da < sa; ++da)
            for (int dz = 0; dz < sz; ++dz) {
              const double* in_ptr =
                  input.data() + ((static_cast<int64_t>(r * sr + dr) * A +
                                   (a * sa + da)) *
                                      Z +
                                  (z * sz + dz)) *
                                     C;
              for (int c = 0; c < C; ++c) out_ptr[c] += in_ptr[c];
            }
        for (int c = 0; c < C; ++c) out_ptr[c] *= inv;
      }
  return out;
}

Array avg_pool3d_backward(const std::vector<int>& input_shape, int sr, int sa,
                          int sz, const Array& dout) {
  Array din(input_shape);
  const int A = input_shape[1], Z = input_shape[2], C = input_shape[3];
  const int Ro = dout.extent(0), Ao = dout.extent(1), Zo = dout.extent(2);
  const double inv = 1.0 / (sr * sa * sz);
  for (int r = 0; r < Ro; ++r)
    for (int a = 0; a < Ao; ++a)
      for (int z = 0; z < Zo; ++z) {
        const double* dout_ptr =
            dout.data() + ((static_cast<int64_t>(r) * Ao + a) * Zo + z) * C;
        for (int dr = 0; dr < sr; ++dr)
          for (int da = 0; da < sa; ++da)
            for (int dz = 0; dz < sz; ++dz) {
              double* din_ptr =
                  din.data() + ((static_cast<int64_t>(r * sr + dr) * A +
                                 (a * sa + da)) *
                                    Z +
                                (z * sz + dz)) *
                                   C;
              for (int c = 0; c < C; ++c) din_ptr[c] += dout_ptr[c] * inv;
            }
      }
  return din;
}

Array finite_diff_grad(const std::function<double(const Array&)>& f,
                       const Array& x, double h_scale) {
  if (h_scale <= 0.0) throw_config("finite_diff_grad step must be positive");
  Array g(x.shape());
  Array probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double h = h_scale * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw_numeric("finite_diff_grad: non-finite objective value");
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_rel_error(const Array& a, const Array& b) {
  if (!a.same_shape(b)) {
    throw_shape("max_rel_error shape mismatch " + a.shape_str() + " vs " +
                b.shape_str());
  }
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

namespace {

constexpr char kArrayMagic[] = "PVOARR1";

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw_io("array container truncated");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw_io("array container truncated");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void write_array(std::ostream& os, const Array& a) {
  os.write(kArrayMagic, 7);
  write_u32(os, static_cast<uint32_t>(a.rank()));
  for (int e : a.shape()) write_u32(os, static_cast<uint32_t>(e));
  for (int64_t i = 0; i < a.numel(); ++i) write_f64(os, a[i]);
  if (!os) throw_io("array write failed");
}

Array read_array(std::istream& is) {
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, kArrayMagic, 7) != 0) {
    throw_io("bad array container magic");
  }
  uint32_t rank = read_u32(is);
  if (rank < 1 || rank > 5) throw_io("array container rank out of range");
  std::vector<int> shape(rank);
  for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u32(is));
  Array a(shape);
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = read_f64(is);
  return a;
}

void save_array(const std::string& path, const Array& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_io("cannot open " + path + " for writing");
  write_array(os, a);
}

Array load_array(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open " + path);
  return read_array(is);
}

std::string array_to_json(const Array& a) {
  nlohmann::json j;
  j["shape"] = a.shape();
  j["data"] = a.storage();
  return j.dump();
}

Array array_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  return Array::from(j.at("shape").get<std::vector<int>>(),
                     j.at("data").get<std::vector<double>>());
}

}  // namespace pvo
