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
#include "pvo/geometry.hpp"

#include <cmath>
#include <string>

#include "json.hpp"
#include "pvo/error.hpp"

namespace pvo {

double wrap_angle(double theta) {
  double t = std::fmod(theta + M_PI, 2.0 * M_PI);
  if (t <= 0.0) t += 2.0 * M_PI;
  return t - M_PI;
}

CartPoint polar_to_cart(const PolarPoint& p) {
  return {p.r * std::cos(p.theta), p.r * std::sin(p.theta), p.z};
}

PolarPoint cart_to_polar(const CartPoint& p) {
  // atan2(0, 0) == 0, so the origin maps to r=0, theta=0.
  return {std::hypot(p.x, p.y), wrap_angle(std::atan2(p.y, p.x)), p.z};
}

namespace {

// Uniform binning with half-open bins [lo, hi), final bin closed.
std::optional<int> bin_of(double v, double lo, double hi, int bins) {
  if (v < lo || v > hi) return std::nullopt;
  int i = static_cast<int>(std::floor((v - lo) / ((hi - lo) / bins)));
  if (i >= bins) i = bins - 1;  // v == hi (or fp roundoff at the top edge)
  return i;
}

double center_of(int i, double lo, double width) {
  return lo + (i + 0.5) * width;
}

}  // namespace

void PolarGridSpec::validate() const {
  if (!(r_min > 0.0) || !(r_max > r_min) || !(z_max > z_min)) {
    throw_config("polar grid ranges invalid: r [" + std::to_string(r_min) +
                 ", " + std::to_string(r_max) + "], z [" +
                 std::to_string(z_min) + ", " + std::to_string(z_max) + "]");
  }
  if (bins_r < 1 || bins_a < 1 || bins_z < 1) {
    throw_config("polar grid bin counts must be >= 1");
  }
}

double PolarGridSpec::width_a() const { return 2.0 * M_PI / bins_a; }

std::optional<VoxelIndex> PolarGridSpec::voxel_index(const PolarPoint& p) const {
  auto ir = bin_of(p.r, r_min, r_max, bins_r);
  auto iz = bin_of(p.z, z_min, z_max, bins_z);
  if (!ir || !iz) return std::nullopt;
  // Theta spans the full circle, so it always bins after normalization.
  double t = wrap_angle(p.theta);
  int ia = static_cast<int>(std::floor((t + M_PI) / width_a()));
  if (ia >= bins_a) ia = bins_a - 1;  // t == pi
  if (ia < 0) ia = 0;
  return VoxelIndex{*ir, ia, *iz};
}

PolarPoint PolarGridSpec::voxel_center(const VoxelIndex& idx) const {
  if (idx[0] < 0 || idx[0] >= bins_r || idx[1] < 0 || idx[1] >= bins_a ||
      idx[2] < 0 || idx[2] >= bins_z) {
    throw_index("polar voxel index out of bounds (" + std::to_string(idx[0]) +
                "," + std::to_string(idx[1]) + "," + std::to_string(idx[2]) +
                ")");
  }
  return voxel_center_unchecked(idx[0], idx[1], idx[2]);
}

PolarPoint PolarGridSpec::voxel_center_unchecked(int ir, int ia, int iz) const {
  return {center_of(ir, r_min, width_r()), center_of(ia, -M_PI, width_a()),
          center_of(iz, z_min, width_z())};
}

void CartesianGridSpec::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min)) {
    throw_config("cartesian grid ranges invalid");
  }
  if (bins_x < 1 || bins_y < 1 || bins_z < 1) {
    throw_config("cartesian grid bin counts must be >= 1");
  }
}

std::optional<VoxelIndex> CartesianGridSpec::voxel_index(const CartPoint& p) const {
  auto ix = bin_of(p.x, x_min, x_max, bins_x);
  auto iy = bin_of(p.y, y_min, y_max, bins_y);
  auto iz = bin_of(p.z, z_min, z_max, bins_z);
  if (!ix || !iy || !iz) return std::nullopt;
  return VoxelIndex{*ix, *iy, *iz};
}

CartPoint CartesianGridSpec::voxel_center(const VoxelIndex& idx) const {
  if (idx[0] < 0 || idx[0] >= bins_x || idx[1] < 0 || idx[1] >= bins_y ||
      idx[2] < 0 || idx[2] >= bins_z) {
    throw_index("cartesian voxel index out of bounds (" +
                std::to_string(idx[0]) + "," + std::to_string(idx[1]) + "," +
                std::to_string(idx[2]) + ")");
  }
  return voxel_center_unchecked(idx[0], idx[1], idx[2]);
}

CartPoint CartesianGridSpec::voxel_center_unchecked(int ix, int iy, int iz) const {
  return {center_of(ix, x_min, width_x()), center_of(iy, y_min, width_y()),
          center_of(iz, z_min, width_z())};
}

bool CartesianGridSpec::contains(const CartPoint& p) const {
  return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max &&
         p.z >= z_min && p.z <= z_max;
}

std::array<int, 3> grid_bins(const GridSpec& spec) {
  if (const auto* p = std::get_if<PolarGridSpec>(&spec)) {
    return {p->bins_r, p->bins_a, p->bins_z};
  }
  const auto& c = std::get<CartesianGridSpec>(spec);
  return {c.bins_x, c.bins_y, c.bins_z};
}

bool grid_axis_wraps(const GridSpec& spec, int axis) {
  return std::holds_alternative<PolarGridSpec>(spec) && axis == 1;
}

std::optional<VoxelIndex> grid_voxel_index(const GridSpec& spec,
                                           const CartPoint& p,
                                           const PolarPoint& polar) {
  if (const auto* g = std::get_if<PolarGridSpec>(&spec)) {
    return g->voxel_index(polar);
  }
  return std::get<CartesianGridSpec>(spec).voxel_index(p);
}

void grid_voxel_centers(const GridSpec& spec, int i0, int i1, int i2,
                        PolarPoint* polar, CartPoint* cart) {
  if (const auto* g = std::get_if<PolarGridSpec>(&spec)) {
    PolarPoint pp = g->voxel_center_unchecked(i0, i1, i2);
    if (polar) *polar = pp;
    if (cart) *cart = polar_to_cart(pp);
    return;
  }
  const auto& c = std::get<CartesianGridSpec>(spec);
  CartPoint cp = c.voxel_center_unchecked(i0, i1, i2);
  if (cart) *cart = cp;
  if (polar) *polar = cart_to_polar(cp);
}

GridPreset grid_preset(const std::string& name) {
  GridPreset g;
  if (name == "paper") {
    g.polar = {0.3, 73.0, -5.0, 3.0, 1024, 1344, 80};
    g.cartesian = {-51.2, 51.2, -51.2, 51.2, -5.0, 3.0, 512, 512, 40};
    g.cartesian_input = {-73.0, 73.0, -73.0, 73.0, -5.0, 3.0, 1024, 1344, 80};
  } else if (name == "desk") {
    g.polar = {0.3, 73.0, -5.0, 3.0, 64, 84, 10};
    g.cartesian = {-12.8, 12.8, -12.8, 12.8, -5.0, 3.0, 64, 64, 10};
    g.cartesian_input = {-73.0, 73.0, -73.0, 73.0, -5.0, 3.0, 64, 84, 10};
  } else if (name == "tiny") {
    g.polar = {0.3, 4.3, -1.0, 1.0, 4, 4, 2};
    g.cartesian = {-2.0, 2.0, -2.0, 2.0, -1.0, 1.0, 4, 4, 2};
    g.cartesian_input = {-4.3, 4.3, -4.3, 4.3, -1.0, 1.0, 4, 4, 2};
  } else {
    throw_config("unknown grid preset '" + name + "'");
  }
  g.polar.validate();
  g.cartesian.validate();
  g.cartesian_input.validate();
  return g;
}

namespace {

nlohmann::json polar_to_j(const PolarGridSpec& s) {
  return {{"r_range", {s.r_min, s.r_max}},
          {"z_range", {s.z_min, s.z_max}},
          {"bins", {s.bins_r, s.bins_a, s.bins_z}}};
}

PolarGridSpec polar_from_j(const nlohmann::json& j) {
  PolarGridSpec s;
  s.r_min = j.at("r_range")[0];
  s.r_max = j.at("r_range")[1];
  s.z_min = j.at("z_range")[0];
  s.z_max = j.at("z_range")[1];
  s.bins_r = j.at("bins")[0];
  s.bins_a = j.at("bins")[1];
  s.bins_z = j.at("bins")[2];
  s.validate();
  return s;
}

nlohmann::json cart_to_j(const CartesianGridSpec& s) {
  return {{"x_range", {s.x_min, s.x_max}},
          {"y_range", {s.y_min, s.y_max}},
          {"z_range", {s.z_min, s.z_max}},
          {"bins", {s.bins_x, s.bins_y, s.bins_z}}};
}

CartesianGridSpec cart_from_j(const nlohmann::json& j) {
  CartesianGridSpec s;
  s.x_min = j.at("x_range")[0];
  s.x_max = j.at("x_range")[1];
  s.y_min = j.at("y_range")[0];
  s.y_max = j.at("y_range")[1];
  s.z_min = j.at("z_range")[0];
  s.z_max = j.at("z_range")[1];
  s.bins_x = j.at("bins")[0];
  s.bins_y = j.at("bins")[1];
  s.bins_z = j.at("bins")[2];
  s.validate();
  return s;
}

}  // namespace

std::string grid_to_json(const GridPreset& preset) {
  nlohmann::json j;
  j["polar"] = polar_to_j(preset.polar);
  j["cartesian"] = cart_to_j(preset.cartesian);
  j["cartesian_input"] = cart_to_j(preset.cartesian_input);
  return j.dump(2);
}

GridPreset grid_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  GridPreset g;
  g.polar = polar_from_j(j.at("polar"));
  g.cartesian = cart_from_j(j.at("cartesian"));
  g.cartesian_input = cart_from_j(j.at("cartesian_input"));
  return g;
}

}  // namespace pvo
