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

#include "doctest.h"
#include "pvo/error.hpp"
#include "pvo/geometry.hpp"
#include "pvo/synth.hpp"

using namespace pvo;

namespace {

CartesianGridSpec desk_region() { return grid_preset("desk").cartesian; }

}  // namespace

TEST_SUITE_BEGIN("synth");

TEST_CASE("rasterize: empty scene is all free") {
  SceneSpec scene;
  SemanticGrid g = rasterize_truth(scene, desk_region());
  for (uint16_t l : g.labels) CHECK(l == kFreeClass);
}

TEST_CASE("rasterize: box covering exactly 2x2x1 voxel centers") {
  CartesianGridSpec spec{-2, 2, -2, 2, -1, 1, 4, 4, 2};
  // Centers live at -1.5, -0.5, 0.5, 1.5 (xy) and -0.5, 0.5 (z).
  SceneSpec scene;
  scene.primitives.push_back({PrimitiveKind::kBox, 5,
                              {0.0, 0.0, -0.5},
                              {0.8, 0.8, 0.3},
                              0.0});
  SemanticGrid g = rasterize_truth(scene, spec);
  int64_t labeled = 0;
  for (uint16_t l : g.labels) labeled += l == 5 ? 1 : 0;
  CHECK(labeled == 4);
}

TEST_CASE("rasterize: later primitives occlude earlier ones") {
  CartesianGridSpec spec{-2, 2, -2, 2, -1, 1, 4, 4, 2};
  SceneSpec scene;
  scene.primitives.push_back({PrimitiveKind::kBox, 3,
                              {0.0, 0.0, -0.5},
                              {1.9, 1.9, 0.4},
                              0.0});
  scene.primitives.push_back({PrimitiveKind::kBox, 5,
                              {0.0, 0.0, -0.5},
                              {0.8, 0.8, 0.4},
                              0.0});
  SemanticGrid g = rasterize_truth(scene, spec);
  // The box wins inside the overlap.
  CHECK(scene.class_at({0.0, 0.0, -0.5}) == 5);
  CHECK(scene.class_at({1.5, 1.5, -0.5}) == 3);
  int64_t cars = 0, terrain = 0;
  for (uint16_t l : g.labels) {
    cars += l == 5 ? 1 : 0;
    terrain += l == 3 ? 1 : 0;
  }
  CHECK(cars == 4);
  CHECK(terrain > 0);
}

TEST_CASE("lidar: single wall, one horizontal beam") {
  SceneSpec scene;
  // Wall at x = 5 facing the origin.
  scene.primitives.push_back({PrimitiveKind::kBox, 4,
                              {5.1, 0.0, 0.0},
                              {0.1, 3.0, 2.0},
                              0.0});
  LidarParams lp;
  lp.n_beams = 1;
  lp.points_per_beam = 1;  // single azimuth at exactly 0
  lp.elevation_lo = 0.0;
  lp.elevation_hi = 0.0;
  PointCloud pc = simulate_lidar(scene, lp, 42);
  REQUIRE(pc.points.size() == 1);
  CHECK(std::abs(pc.points[0].x - 5.0) <= 3 * lp.range_sigma + 1e-12);
  CHECK(std::abs(pc.points[0].y) <= 1e-12);
  CHECK(std::abs(pc.points[0].z) <= 1e-12);
  CHECK(pc.points[0].intensity == class_reflectance(4));
}

TEST_CASE("lidar: empty scene yields an empty cloud") {
  LidarParams lp;
  CHECK(simulate_lidar(SceneSpec{}, lp, 1).points.empty());
  lp.n_beams = 0;
  CHECK_THROWS_AS(simulate_lidar(SceneSpec{}, lp, 1), Error);
}

TEST_CASE("lidar: first-hit rule on nested boxes vs ray-march oracle") {
  SceneSpec scene;
  scene.primitives.push_back({PrimitiveKind::kBox, 4,
                              {6.0, 0.0, 0.0},
                              {1.5, 1.5, 1.5},
                              0.0});
  scene.primitives.push_back({PrimitiveKind::kBox, 5,
                              {6.0, 0.0, 0.0},
                              {0.5, 0.5, 0.5},
                              0.0});
  LidarParams lp;
  lp.n_beams = 3;
  lp.points_per_beam = 64;
  lp.elevation_lo = -0.15;
  lp.elevation_hi = 0.15;
  lp.range_sigma = 0.0;  // exact surfaces for the oracle comparison
  PointCloud pc = simulate_lidar(scene, lp, 5);
  REQUIRE(!pc.points.empty());

  // Ray-march oracle: step along each returned point's ray direction; the
  // first containment transition must match the analytic hit distance.
  for (const Point& p : pc.points) {
    const double range = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    const CartPoint dir{p.x / range, p.y / range, p.z / range};
    const double dt = 1e-4;
    double t = dt;
    while (t < 20.0) {
      if (scene.class_at({t * dir.x, t * dir.y, t * dir.z}) != kFreeClass) break;
      t += dt;
    }
    CHECK(std::abs(t - range) <= 2 * dt);
    // Only the outer surface is sampled along each ray.
    CHECK(p.intensity == class_reflectance(4));
  }
}

TEST_CASE("lidar: points lie on primitive surfaces within 3 sigma") {
  SceneSpec scene = make_random_scene(11, desk_region());
  LidarParams lp;
  lp.n_beams = 8;
  lp.points_per_beam = 90;
  PointCloud noisy = simulate_lidar(scene, lp, 11);
  lp.range_sigma = 0.0;
  PointCloud exact = simulate_lidar(scene, lp, 11);
  REQUIRE(noisy.points.size() == exact.points.size());
  for (size_t i = 0; i < noisy.points.size(); ++i) {
    const double dx = noisy.points[i].x - exact.points[i].x;
    const double dy = noisy.points[i].y - exact.points[i].y;
    const double dz = noisy.points[i].z - exact.points[i].z;
    CHECK(std::sqrt(dx * dx + dy * dy + dz * dz) <= 3.0 * 0.02 + 1e-9);
  }
}

TEST_CASE("determinism: identical (scene, seed) gives bit-identical outputs") {
  SceneSpec scene = make_random_scene(21, desk_region());
  LidarParams lp;
  lp.n_beams = 6;
  lp.points_per_beam = 60;
  PointCloud a = simulate_lidar(scene, lp, 9);
  PointCloud b = simulate_lidar(scene, lp, 9);
  REQUIRE(a.points.size() == b.points.size());
  for (size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].x == b.points[i].x);
    CHECK(a.points[i].y == b.points[i].y);
    CHECK(a.points[i].z == b.points[i].z);
  }

  SemanticGrid g1 = rasterize_truth(scene, desk_region());
  SemanticGrid g2 = rasterize_truth(scene, desk_region());
  CHECK(g1.labels == g2.labels);

  GridSpec polar = grid_preset("desk").polar;
  FeatureVolume v1 = synthesize_camera_volume(scene, polar, 10, 3);
  FeatureVolume v2 = synthesize_camera_volume(scene, polar, 10, 3);
  for (int64_t i = 0; i < v1.data.numel(); ++i) CHECK(v1.data[i] == v2.data[i]);
}

TEST_CASE("camera volume: empty scene is zero, class swap is local") {
  GridSpec polar = grid_preset("desk").polar;
  FeatureVolume empty = synthesize_camera_volume(SceneSpec{}, polar, 10, 1);
  for (int64_t i = 0; i < empty.data.numel(); ++i) CHECK(empty.data[i] == 0.0);

  SceneSpec scene;
  scene.primitives.push_back({PrimitiveKind::kBox, 5,
                              {4.0, 0.0, -0.5},
                              {1.0, 1.0, 0.5},
                              0.0});
  SceneSpec swapped = scene;
  swapped.primitives[0].class_id = 4;

  FeatureVolume a = synthesize_camera_volume(scene, polar, 10, 1);
  FeatureVolume b = synthesize_camera_volume(swapped, polar, 10, 1);
  // The diff oracle: exactly the voxels occupied by the primitive change.
  for (size_t v = 0; v < a.mask.size(); ++v) {
    CHECK(a.mask[v] == b.mask[v]);
    bool differs = false;
    for (int c = 0; c < 10; ++c) {
      if (a.data[v * 10 + c] != b.data[v * 10 + c]) differs = true;
    }
    CHECK(differs == (a.mask[v] != 0));
  }
}

TEST_CASE("random scenes validate against their region") {
  for (uint64_t seed = 0; seed < 12; ++seed) {
    SceneSpec scene = make_random_scene(seed, desk_region());
    CHECK_NOTHROW(scene.validate(desk_region()));
    CHECK(!scene.primitives.empty());
  }
  // The tiny region must also produce valid scenes (used by gradcheck).
  CartesianGridSpec tiny = grid_preset("tiny").cartesian;
  for (uint64_t seed = 0; seed < 4; ++seed) {
    CHECK_NOTHROW(make_random_scene(seed, tiny).validate(tiny));
  }
}

TEST_CASE("occupied cartesian voxel density decays with range") {
  // Premise the polar grid counteracts: on the Cartesian grid, occupied-voxel
  // density per BEV annulus falls off with range (statistically over seeds).
  CartesianGridSpec region = desk_region();
  LidarParams lp;
  lp.n_beams = 12;
  lp.points_per_beam = 180;
  double near_acc = 0.0, far_acc = 0.0;
  for (uint64_t seed = 0; seed < 6; ++seed) {
    SceneSpec scene = make_random_scene(seed, region);
    PointCloud pc = simulate_lidar(scene, lp, seed);
    VoxelizeResult res = voxelize_points(pc, GridSpec(region));
    // Count occupied voxels and annulus areas for near (r<6) and far (r>8).
    int64_t near_occ = 0, far_occ = 0;
    const auto b = res.volume.bins();
    for (int ix = 0; ix < b[0]; ++ix)
      for (int iy = 0; iy < b[1]; ++iy)
        for (int iz = 0; iz < b[2]; ++iz) {
          const int64_t v = (static_cast<int64_t>(ix) * b[1] + iy) * b[2] + iz;
          if (!res.volume.mask[v]) continue;
          CartPoint c = region.voxel_center_unchecked(ix, iy, iz);
          const double r = std::hypot(c.x, c.y);
          if (r < 6.0) ++near_occ;
          if (r > 8.0 && r < 12.0) ++far_occ;
        }
    const double near_area = M_PI * 6.0 * 6.0;
    const double far_area = M_PI * (12.0 * 12.0 - 8.0 * 8.0);
    near_acc += near_occ / near_area;
    far_acc += far_occ / far_area;
  }
  CHECK(near_acc > far_acc);
}

TEST_CASE("scene JSON round trip") {
  SceneSpec scene = make_random_scene(33, desk_region());
  SceneSpec back = SceneSpec::from_json(scene.to_json());
  CHECK(back.seed == scene.seed);
  REQUIRE(back.primitives.size() == scene.primitives.size());
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    CHECK(back.primitives[i].class_id == scene.primitives[i].class_id);
    CHECK(back.primitives[i].center.x == scene.primitives[i].center.x);
    CHECK(back.primitives[i].yaw == scene.primitives[i].yaw);
  }
  CHECK_THROWS_AS(SceneSpec::from_json("{\"seed\":1,\"primitives\":[{\"kind\":"
                                       "\"sphere\",\"class\":1,\"center\":[0,0,"
                                       "0],\"half\":[1,1,1]}]}"),
                  Error);
}

TEST_SUITE_END();
