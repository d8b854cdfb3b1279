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
#ifndef PVO_GEOMETRY_HPP_
#define PVO_GEOMETRY_HPP_

#include <array>
#include <optional>
#include <string>
#include <variant>

namespace pvo {

struct CartPoint {
  double x = 0.0, y = 0.0, z = 0.0;
};

// theta is kept normalized to (-pi, pi].
struct PolarPoint {
  double r = 0.0, theta = 0.0, z = 0.0;
};

// Normalizes an angle to (-pi, pi].
double wrap_angle(double theta);

CartPoint polar_to_cart(const PolarPoint& p);
PolarPoint cart_to_polar(const CartPoint& p);

using VoxelIndex = std::array<int, 3>;

// Cylindrical grid over (r, theta, z). theta spans the full circle, so the
// azimuth axis is topologically circular: wrap padding and wrapped neighbor
// queries apply on axis 1 (see conv padding and GRP).
struct PolarGridSpec {
  double r_min = 0.0, r_max = 0.0;
  double z_min = 0.0, z_max = 0.0;
  int bins_r = 0, bins_a = 0, bins_z = 0;

  void validate() const;
  double width_r() const { return (r_max - r_min) / bins_r; }
  double width_a() const;  // 2*pi / bins_a
  double width_z() const { return (z_max - z_min) / bins_z; }

  // Uniform binning, half-open bins [lo, hi) with the final bin closed so the
  // range maximum stays in range. Out-of-range r or z yields nothing; theta is
  // always in range after normalization.
  std::optional<VoxelIndex> voxel_index(const PolarPoint& p) const;
  PolarPoint voxel_center(const VoxelIndex& idx) const;
  // Center math without bounds checking; used for pad halos.
  PolarPoint voxel_center_unchecked(int ir, int ia, int iz) const;
};

struct CartesianGridSpec {
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
  double z_min = 0.0, z_max = 0.0;
  int bins_x = 0, bins_y = 0, bins_z = 0;

  void validate() const;
  double width_x() const { return (x_max - x_min) / bins_x; }
  double width_y() const { return (y_max - y_min) / bins_y; }
  double width_z() const { return (z_max - z_min) / bins_z; }

  std::optional<VoxelIndex> voxel_index(const CartPoint& p) const;
  CartPoint voxel_center(const VoxelIndex& idx) const;
  CartPoint voxel_center_unchecked(int ix, int iy, int iz) const;
  bool contains(const CartPoint& p) const;
};

// Either grid flavor; the feature pipeline is generic over this.
using GridSpec = std::variant<PolarGridSpec, CartesianGridSpec>;

std::array<int, 3> grid_bins(const GridSpec& spec);
bool grid_axis_wraps(const GridSpec& spec, int axis);
// Index of a physical point on either grid flavor.
std::optional<VoxelIndex> grid_voxel_index(const GridSpec& spec,
                                           const CartPoint& p,
                                           const PolarPoint& polar);
// Physical center of a voxel, in both coordinate systems.
void grid_voxel_centers(const GridSpec& spec, int i0, int i1, int i2,
                        PolarPoint* polar, CartPoint* cart);

// Named grid presets.
struct GridPreset {
  PolarGridSpec polar;               // model input grid
  CartesianGridSpec cartesian;       // output / evaluation grid
  CartesianGridSpec cartesian_input; // equal-voxel-count baseline input grid
};

// "paper": polar 1024x1344x80 over r [0.3, 73.0], z [-5, 3]; Cartesian output
// 512x512x40 over [-51.2, 51.2]^2 x [-5, 3] at 0.2 m.
// "desk":  polar 64x84x10 over the same ranges; Cartesian output 64x64x10 over
// [-12.8, 12.8]^2 x [-5, 3] at 0.4/0.8 m.
// "tiny":  4x4x2 grids for finite-difference checks.
GridPreset grid_preset(const std::string& name);

std::string grid_to_json(const GridPreset& preset);
GridPreset grid_from_json(const std::string& json_text);

}  // namespace pvo

#endif  // PVO_GEOMETRY_HPP_
