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
#ifndef PVO_ARRAY_HPP_
#define PVO_ARRAY_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pvo/error.hpp"

namespace pvo {

// Dense rank-1..4 array of 64-bit floats, row-major (last index fastest).
class Array {
 public:
  Array() = default;
  explicit Array(std::vector<int> shape);
  static Array full(std::vector<int> shape, double value);
  static Array from(std::vector<int> shape, std::vector<double> data);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[axis]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  double& at(int i) { return data_[i]; }
  double at(int i) const { return data_[i]; }
  double& at(int i, int j) { return data_[static_cast<int64_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<int64_t>(i) * shape_[1] + j]; }
  double& at(int i, int j, int k) {
    return data_[(static_cast<int64_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double at(int i, int j, int k) const {
    return data_[(static_cast<int64_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    return data_[((static_cast<int64_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(int i, int j, int k, int l) const {
    return data_[((static_cast<int64_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Array& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  void fill(double value);
  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Value plus a gradient slot of identical shape (zero-initialized).
struct DualArray {
  Array value;
  Array grad;

  DualArray() = default;
  explicit DualArray(Array v) : value(std::move(v)), grad(Array(value.shape())) {}
  void zero_grad() { grad.fill(0.0); }
};

// ---- elementwise helpers ----

void axpy(double alpha, const Array& x, Array& y);  // y += alpha * x
Array add(const Array& a, const Array& b);
Array scale(const Array& a, double alpha);

// ---- matmul ----

Array matmul(const Array& a, const Array& b);
// Accumulates da += dc * b^T and db += a^T * dc.
void matmul_backward(const Array& a, const Array& b, const Array& dc,
                     Array& da, Array& db);

// ---- softmax over the last axis ----

Array softmax(const Array& x);
// dx from upstream g and forward output y: dx = y * (g - <g, y>) per row.
Array softmax_backward(const Array& y, const Array& g);

// ---- relu ----

Array relu(const Array& x);
// Gate is 1 for x > 0, 0 otherwise (subgradient 0 at x == 0).
Array relu_backward(const Array& x, const Array& g);

// ---- conv3d ----

enum class Pad { kZero, kWrap };

struct ConvPadding {
  Pad r = Pad::kZero;
  Pad a = Pad::kZero;
  Pad z = Pad::kZero;
  static ConvPadding all_zero() { return {Pad::kZero, Pad::kZero, Pad::kZero}; }
  static ConvPadding all_wrap() { return {Pad::kWrap, Pad::kWrap, Pad::kWrap}; }
  static ConvPadding polar() { return {Pad::kZero, Pad::kWrap, Pad::kZero}; }
};

// Cross-correlation (no kernel flip), stride 1, "same" output extents.
// input [R,A,Z,Cin], kernel [kr,ka,kz,Cin,Cout] with odd spatial extents.
Array conv3d(const Array& input, const Array& kernel, const ConvPadding& pad);
void conv3d_backward(const Array& input, const Array& kernel,
                     const ConvPadding& pad, const Array& dout,
                     Array& dinput, Array& dkernel);

// Composes two kernels so that conv(conv(x,k1),k2) == conv(x, compose(k1,k2))
// on a wrapped (toroidal) domain; spatial extents add minus one per axis.
Array compose_kernels(const Array& k1, const Array& k2);

// ---- average pooling (backbone downsampling) ----

Array avg_pool3d(const Array& input, int sr, int sa, int sz);
Array avg_pool3d_backward(const std::vector<int>& input_shape, int sr, int sa,
                          int sz, const Array& dout);

// ---- finite differences ----

// Central differences of a scalar-valued f at x; per-element step
// h_i = h_scale * max(1, |x_i|).
Array finite_diff_grad(const std::function<double(const Array&)>& f,
                       const Array& x, double h_scale = 1e-4);

// Relative error with denominator max(|a|, |b|, 1e-8); returns the max over
// all elements.
double max_rel_error(const Array& a, const Array& b);

// ---- serialization ----

// Flat binary container: magic "PVOARR1", u32 rank, u32 extents,
// little-endian f64 payload.
void write_array(std::ostream& os, const Array& a);
Array read_array(std::istream& is);
void save_array(const std::string& path, const Array& a);
Array load_array(const std::string& path);

// JSON export for small arrays in test fixtures: {"shape":[...],"data":[...]}.
std::string array_to_json(const Array& a);
Array array_from_json(const std::string& json_text);

}  // namespace pvo

#endif  // PVO_ARRAY_HPP_
