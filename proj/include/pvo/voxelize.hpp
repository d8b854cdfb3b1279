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
#ifndef PVO_VOXELIZE_HPP_
#define PVO_VOXELIZE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pvo/array.hpp"
#include "pvo/geometry.hpp"

namespace pvo {

// One LiDAR return. Polar coordinates are stored redundantly next to the
// Cartesian ones and must agree with cart_to_polar within 1e-9.
struct Point {
  double r, theta, x, y, z, intensity;
};

struct PointCloud {
  std::vector<Point> points;

  static Point make_point(double x, double y, double z, double intensity);
  void validate() const;

  // CSV with header "x,y,z,i"; polar redundancy recomputed on load.
  static PointCloud load_csv(const std::string& path);
  void save_csv(const std::string& path) const;
  // Binary container with shape N x 4 (x, y, z, i).
  static PointCloud load_binary(const std::string& path);
  void save_binary(const std::string& path) const;
};

// Dense feature grid over either grid flavor. The mask marks voxels that
// received at least one point (meaningful for voxelizer outputs).
struct FeatureVolume {
  GridSpec spec;
  int channels = 0;
  Array data;  // [b0, b1, b2, channels]
  std::vector<uint8_t> mask;

  static FeatureVolume zeros(const GridSpec& spec, int channels);
  std::array<int, 3> bins() const { return grid_bins(spec); }
};

// Feature channel layout produced by voxelize_points (channels 0..9):
// mean (r, theta, x, y, z, intensity), mean offset from the voxel center along
// the grid's native axes, log(1 + count).
inline constexpr int kVoxelFeatureChannels = 10;

struct VoxelizeResult {
  FeatureVolume volume;
  int64_t in_range = 0;
  int64_t dropped = 0;  // out-of-range points, silently dropped but tallied
};

// Mean-pools points into a dense feature volume. Binning happens first and
// each voxel accumulates its contributions in point-index order, so the result
// is bitwise reproducible.
VoxelizeResult voxelize_points(const PointCloud& pc, const GridSpec& spec);

struct OccupancyBand {
  double radius_lo = 0.0, radius_hi = 0.0;
  int64_t occupied_voxels = 0;
  int64_t points = 0;
  double points_per_occupied_voxel = 0.0;
};

// Bins occupied voxels by the BEV radius of their centers. Bands are equal
// width over the radial span actually occupied, so the statistic stays
// meaningful when the grid reaches far beyond the scene.
std::vector<OccupancyBand> occupancy_histogram(const PointCloud& pc,
                                               const GridSpec& spec,
                                               int n_range_bands);

// max/min of points_per_occupied_voxel over nonempty bands (1.0 when fewer
// than two nonempty bands).
double band_imbalance(const std::vector<OccupancyBand>& bands);

}  // namespace pvo

#endif  // PVO_VOXELIZE_HPP_
