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
#ifndef PVO_SYNTH_HPP_
#define PVO_SYNTH_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pvo/geometry.hpp"
#include "pvo/head.hpp"
#include "pvo/voxelize.hpp"

namespace pvo {

// Desk-scale class taxonomy.
inline constexpr int kFreeClass = 0;
inline constexpr int kNumClasses = 8;
const char* class_name(int class_id);
double class_reflectance(int class_id);

enum class PrimitiveKind { kBox, kCylinder };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kBox;
  int class_id = 0;
  CartPoint center;
  // Box: half extents per axis, rotated by yaw around z.
  // Cylinder: half.x is the radius, half.z the half height (yaw ignored).
  CartPoint half;
  double yaw = 0.0;

  bool contains(const CartPoint& p) const;
  // First intersection of the ray origin + t*dir with the solid's surface,
  // t >= eps; analytic (slab method for boxes, quadratic for cylinders).
  std::optional<double> ray_hit(const CartPoint& origin,
                                const CartPoint& dir) const;
};

struct SceneSpec {
  uint64_t seed = 0;
  std::vector<Primitive> primitives;

  // Later primitives occlude earlier ones in rasterization.
  int class_at(const CartPoint& p) const;
  void validate(const CartesianGridSpec& region) const;

  std::string to_json() const;
  static SceneSpec from_json(const std::string& json_text);
  static SceneSpec load(const std::string& path);
  void save(const std::string& path) const;
};

// Procedural scene: ground, road, sidewalks plus a seeded mix of cars,
// buildings, poles and vegetation, all inside `region`.
SceneSpec make_random_scene(uint64_t seed, const CartesianGridSpec& region);

SemanticGrid rasterize_truth(const SceneSpec& scene,
                             const CartesianGridSpec& spec);

struct LidarParams {
  int n_beams = 16;
  int points_per_beam = 360;
  double elevation_lo = -0.5236;  // -30 deg
  double elevation_hi = 0.1745;   // +10 deg
  double range_sigma = 0.02;      // Gaussian range noise, clamped to +-3 sigma
  double max_range = 120.0;
};

// Casts rays from the origin over an azimuth x elevation lattice; keeps the
// first surface hit per ray. Deterministic for a fixed seed (per-ray derived
// noise streams).
PointCloud simulate_lidar(const SceneSpec& scene, const LidarParams& params,
                          uint64_t seed);

// Stand-in for a camera feature lift: a class-conditioned base vector at every
// voxel whose center is occupied by the scene, plus seeded noise.
FeatureVolume synthesize_camera_volume(const SceneSpec& scene,
                                       const GridSpec& spec, int channels,
                                       uint64_t seed);

}  // namespace pvo

#endif  // PVO_SYNTH_HPP_
