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
#include "pvo/voxelize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pvo {

Point PointCloud::make_point(double x, double y, double z, double intensity) {
  PolarPoint p = cart_to_polar({x, y, z});
  return {p.r, p.theta, x, y, z, intensity};
}

void PointCloud::validate() const {
  for (size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    PolarPoint q = cart_to_polar({p.x, p.y, p.z});
    if (std::abs(q.r - p.r) > 1e-9 ||
        std::abs(wrap_angle(q.theta - p.theta)) > 1e-9) {
      throw_data("point " + std::to_string(i) +
                 ": stored polar coordinates disagree with cart_to_polar");
    }
  }
}

PointCloud PointCloud::load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_io("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw_data("empty point cloud file " + path);
  // Tolerate trailing carriage returns from foreign tools.
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
  if (line != "x,y,z,i") {
    throw_data("point cloud CSV must start with header 'x,y,z,i', got '" +
               line + "'");
  }
  PointCloud pc;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    double x, y, z, i;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &x, &y, &z, &i) != 4) {
      throw_data(path + ":" + std::to_string(lineno) + ": bad CSV row");
    }
    pc.points.push_back(make_point(x, y, z, i));
  }
  return pc;
}

void PointCloud::save_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw_io("cannot open " + path + " for writing");
  os << "x,y,z,i\n";
  char buf[160];
  for (const Point& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", p.x, p.y, p.z,
                  p.intensity);
    os << buf;
  }
  if (!os) throw_io("write failed for " + path);
}

PointCloud PointCloud::load_binary(const std::string& path) {
  Array a = load_array(path);
  if (a.rank() != 2 || a.extent(1) != 4) {
    throw_data("binary point cloud must have shape Nx4, got " + a.shape_str());
  }
  PointCloud pc;
  pc.points.reserve(a.extent(0));
  for (int i = 0; i < a.extent(0); ++i) {
    pc.points.push_back(
        make_point(a.at(i, 0), a.at(i, 1), a.at(i, 2), a.at(i, 3)));
  }
  return pc;
}

void PointCloud::save_binary(const std::string& path) const {
  Array a({std::max<int>(1, static_cast<int>(points.size())), 4});
  // An empty cloud is stored as shape 1x4 with a NaN-free sentinel of zeros
  // and is indistinguishable from a single origin point; CSV is the canonical
  // format, the binary one is for bulk fixtures.
  for (size_t i = 0; i < points.size(); ++i) {
    a.at(static_cast<int>(i), 0) = points[i].x;
    a.at(static_cast<int>(i), 1) = points[i].y;
    a.at(static_cast<int>(i), 2) = points[i].z;
    a.at(static_cast<int>(i), 3) = points[i].intensity;
  }
  save_array(path, a);
}

FeatureVolume FeatureVolume::zeros(const GridSpec& spec, int channels) {
  FeatureVolume v;
  v.spec = spec;
  v.channels = channels;
  auto b = grid_bins(spec);
  v.data = Array({b[0], b[1], b[2], channels});
  v.mask.assign(static_cast<size_t>(b[0]) * b[1] * b[2], 0);
  return v;
}

VoxelizeResult voxelize_points(const PointCloud& pc, const GridSpec& spec) {
  VoxelizeResult res;
  res.volume = FeatureVolume::zeros(spec, kVoxelFeatureChannels);
  auto b = grid_bins(spec);
  const int64_t n_vox = static_cast<int64_t>(b[0]) * b[1] * b[2];

  // Bin first, then accumulate per voxel in point-index order.
  std::vector<int32_t> counts(n_vox, 0);
  std::vector<int64_t> voxel_of(pc.points.size());
  for (size_t i = 0; i < pc.points.size(); ++i) {
    const Point& p = pc.points[i];
    auto idx = grid_voxel_index(spec, {p.x, p.y, p.z}, {p.r, p.theta, p.z});
    if (!idx) {
      voxel_of[i] = -1;
      ++res.dropped;
      continue;
    }
    voxel_of[i] = (static_cast<int64_t>((*idx)[0]) * b[1] + (*idx)[1]) * b[2] +
                  (*idx)[2];
    ++counts[voxel_of[i]];
    ++res.in_range;
  }

  Array& data = res.volume.data;
  for (size_t i = 0; i < pc.points.size(); ++i) {
    const int64_t v = voxel_of[i];
    if (v < 0) continue;
    const Point& p = pc.points[i];
    double* f = data.data() + v * kVoxelFeatureChannels;
    f[0] += p.r;
    f[1] += p.theta;
    f[2] += p.x;
    f[3] += p.y;
    f[4] += p.z;
    f[5] += p.intensity;
  }

  for (int64_t v = 0; v < n_vox; ++v) {
    if (counts[v] == 0) continue;
    res.volume.mask[v] = 1;
    double* f = data.data() + v * kVoxelFeatureChannels;
    const double inv = 1.0 / counts[v];
    for (int c = 0; c < 6; ++c) f[c] *= inv;
    // Offsets of the mean point from the voxel center, along native axes.
    const int i0 = static_cast<int>(v / (b[1] * b[2]));
    const int i1 = static_cast<int>((v / b[2]) % b[1]);
    const int i2 = static_cast<int>(v % b[2]);
    if (const auto* g = std::get_if<PolarGridSpec>(&spec)) {
      PolarPoint c = g->voxel_center_unchecked(i0, i1, i2);
      f[6] = f[0] - c.r;
      f[7] = wrap_angle(f[1] - c.theta);
      f[8] = f[4] - c.z;
    } else {
      CartPoint c = std::get<CartesianGridSpec>(spec).voxel_center_unchecked(
          i0, i1, i2);
      f[6] = f[2] - c.x;
      f[7] = f[3] - c.y;
      f[8] = f[4] - c.z;
    }
    f[9] = std::log1p(static_cast<double>(counts[v]));
  }
  return res;
}

std::vector<OccupancyBand> occupancy_histogram(const PointCloud& pc,
                                               const GridSpec& spec,
                                               int n_range_bands) {
  if (n_range_bands < 1) throw_config("occupancy_histogram needs >= 1 band");
  auto b = grid_bins(spec);
  const int64_t n_vox = static_cast<int64_t>(b[0]) * b[1] * b[2];
  std::vector<int64_t> counts(n_vox, 0);
  for (const Point& p : pc.points) {
    auto idx = grid_voxel_index(spec, {p.x, p.y, p.z}, {p.r, p.theta, p.z});
    if (!idx) continue;
    ++counts[(static_cast<int64_t>((*idx)[0]) * b[1] + (*idx)[1]) * b[2] +
             (*idx)[2]];
  }

  // Radial span of the occupied voxels' centers.
  double lo = 0.0, hi = 0.0;
  bool any = false;
  std::vector<double> radius(n_vox, 0.0);
  for (int64_t v = 0; v < n_vox; ++v) {
    if (counts[v] == 0) continue;
    const int i0 = static_cast<int>(v / (b[1] * b[2]));
    const int i1 = static_cast<int>((v / b[2]) % b[1]);
    const int i2 = static_cast<int>(v % b[2]);
    PolarPoint pp;
    grid_voxel_centers(spec, i0, i1, i2, &pp, nullptr);
    radius[v] = pp.r;
    if (!any) {
      lo = hi = pp.r;
      any = true;
    } else {
      lo = std::min(lo, pp.r);
      hi = std::max(hi, pp.r);
    }
  }

  std::vector<OccupancyBand> bands(n_range_bands);
  if (!any) return bands;  // all-zero table for an empty cloud
  if (hi == lo) hi = lo + 1e-9;
  const double width = (hi - lo) / n_range_bands;
  for (int i = 0; i < n_range_bands; ++i) {
    bands[i].radius_lo = lo + i * width;
    bands[i].radius_hi = lo + (i + 1) * width;
  }
  for (int64_t v = 0; v < n_vox; ++v) {
    if (counts[v] == 0) continue;
    int band = static_cast<int>((radius[v] - lo) / width);
    if (band >= n_range_bands) band = n_range_bands - 1;
    ++bands[band].occupied_voxels;
    bands[band].points += counts[v];
  }
  for (auto& band : bands) {
    if (band.occupied_voxels > 0) {
      band.points_per_occupied_voxel =
          static_cast<double>(band.points) / band.occupied_voxels;
    }
  }
  return bands;
}

double band_imbalance(const std::vector<OccupancyBand>& bands) {
  double mn = 0.0, mx = 0.0;
  bool any = false;
  for (const auto& band : bands) {
    if (band.occupied_voxels == 0) continue;
    const double v = band.points_per_occupied_voxel;
    if (!any) {
      mn = mx = v;
      any = true;
    } else {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
  }
  return (!any || mn == 0.0) ? 1.0 : mx / mn;
}

}  // namespace pvo
