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
#include "pvo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pvo/rng.hpp"

namespace pvo {

namespace {

const char* kClassNames[kNumClasses] = {"free",     "road", "sidewalk",
                                        "terrain",  "building", "car",
                                        "pole",     "vegetation"};

const double kReflectance[kNumClasses] = {0.0,  0.35, 0.45, 0.30,
                                          0.60, 0.80, 0.70, 0.50};

constexpr double kRayEps = 1e-9;

}  // namespace

const char* class_name(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses) return "unknown";
  return kClassNames[class_id];
}

double class_reflectance(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses) return 0.0;
  return kReflectance[class_id];
}

bool Primitive::contains(const CartPoint& p) const {
  const double dx = p.x - center.x, dy = p.y - center.y, dz = p.z - center.z;
  if (kind == PrimitiveKind::kCylinder) {
    return dx * dx + dy * dy <= half.x * half.x && std::abs(dz) <= half.z;
  }
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= half.x && std::abs(ly) <= half.y &&
         std::abs(dz) <= half.z;
}

std::optional<double> Primitive::ray_hit(const CartPoint& origin,
                                         const CartPoint& dir) const {
  if (kind == PrimitiveKind::kBox) {
    // Slab method in the box frame.
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double ox = origin.x - center.x, oy = origin.y - center.y;
    const double o[3] = {c * ox + s * oy, -s * ox + c * oy,
                         origin.z - center.z};
    const double d[3] = {c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};
    const double h[3] = {half.x, half.y, half.z};
    double tmin = -1e300, tmax = 1e300;
    for (int ax = 0; ax < 3; ++ax) {
      if (d[ax] == 0.0) {
        if (std::abs(o[ax]) > h[ax]) return std::nullopt;
        continue;
      }
      double t1 = (-h[ax] - o[ax]) / d[ax];
      double t2 = (h[ax] - o[ax]) / d[ax];
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
      if (tmin > tmax) return std::nullopt;
    }
    if (tmin >= kRayEps) return tmin;
    if (tmax >= kRayEps) return tmax;  // origin inside: exit point
    return std::nullopt;
  }

  // Cylinder: side surface plus caps.
  const double ox = origin.x - center.x, oy = origin.y - center.y;
  const double oz = origin.z - center.z;
  const double r2 = half.x * half.x;
  double best = 1e300;
  const double a = dir.x * dir.x + dir.y * dir.y;
  if (a > 0.0) {
    const double b = 2.0 * (ox * dir.x + oy * dir.y);
    const double cq = ox * ox + oy * oy - r2;
    const double disc = b * b - 4.0 * a * cq;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t >= kRayEps && t < best &&
            std::abs(oz + t * dir.z) <= half.z) {
          best = t;
        }
      }
    }
  }
  if (dir.z != 0.0) {
    for (double zc : {-half.z, half.z}) {
      const double t = (zc - oz) / dir.z;
      if (t >= kRayEps && t < best) {
        const double px = ox + t * dir.x, py = oy + t * dir.y;
        if (px * px + py * py <= r2) best = t;
      }
    }
  }
  if (best == 1e300) return std::nullopt;
  return best;
}

int SceneSpec::class_at(const CartPoint& p) const {
  int cls = kFreeClass;
  for (const Primitive& prim : primitives) {
    if (prim.contains(p)) cls = prim.class_id;  // later primitives occlude
  }
  return cls;
}

void SceneSpec::validate(const CartesianGridSpec& region) const {
  for (size_t i = 0; i < primitives.size(); ++i) {
    const Primitive& p = primitives[i];
    if (p.class_id < 1 || p.class_id >= kNumClasses) {
      throw_data("primitive " + std::to_string(i) + " class id " +
                 std::to_string(p.class_id) + " out of range");
    }
    // Conservative axis-aligned bound (covers any yaw).
    double hx = p.half.x, hy = p.half.y;
    if (p.kind == PrimitiveKind::kBox) {
      const double c = std::abs(std::cos(p.yaw)), s = std::abs(std::sin(p.yaw));
      hx = c * p.half.x + s * p.half.y;
      hy = s * p.half.x + c * p.half.y;
    } else {
      hy = p.half.x;
    }
    if (p.center.x - hx < region.x_min || p.center.x + hx > region.x_max ||
        p.center.y - hy < region.y_min || p.center.y + hy > region.y_max ||
        p.center.z - p.half.z < region.z_min ||
        p.center.z + p.half.z > region.z_max) {
      throw_data("primitive " + std::to_string(i) +
                 " extends outside the Cartesian grid range");
    }
  }
}

std::string SceneSpec::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["primitives"] = nlohmann::json::array();
  for (const Primitive& p : primitives) {
    j["primitives"].push_back(
        {{"kind", p.kind == PrimitiveKind::kBox ? "box" : "cylinder"},
         {"class", p.class_id},
         {"center", {p.center.x, p.center.y, p.center.z}},
         {"half", {p.half.x, p.half.y, p.half.z}},
         {"yaw", p.yaw}});
  }
  return j.dump(2);
}

SceneSpec SceneSpec::from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  SceneSpec s;
  s.seed = j.at("seed").get<uint64_t>();
  for (const auto& pj : j.at("primitives")) {
    Primitive p;
    const std::string kind = pj.at("kind");
    if (kind == "box") {
      p.kind = PrimitiveKind::kBox;
    } else if (kind == "cylinder") {
      p.kind = PrimitiveKind::kCylinder;
    } else {
      throw_data("unknown primitive kind '" + kind + "'");
    }
    p.class_id = pj.at("class");
    p.center = {pj.at("center")[0], pj.at("center")[1], pj.at("center")[2]};
    p.half = {pj.at("half")[0], pj.at("half")[1], pj.at("half")[2]};
    p.yaw = pj.value("yaw", 0.0);
    s.primitives.push_back(p);
  }
  return s;
}

SceneSpec SceneSpec::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_io("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

void SceneSpec::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw_io("cannot open " + path + " for writing");
  os << to_json() << "\n";
  if (!os) throw_io("write failed for " + path);
}

SceneSpec make_random_scene(uint64_t seed, const CartesianGridSpec& region) {
  Rng rng = Rng::derive(seed, 0x5ce7e);
  SceneSpec scene;
  scene.seed = seed;

  const double sx = 0.5 * (region.x_max - region.x_min);
  const double sy = 0.5 * (region.y_max - region.y_min);
  const double cx = 0.5 * (region.x_max + region.x_min);
  const double cy = 0.5 * (region.y_max + region.y_min);
  const double zspan = region.z_max - region.z_min;
  // Ground sits in the lower quarter of the z range, sensor height is z = 0.
  const double ground_top = region.z_min + 0.38 * zspan;
  const double ground_bot = region.z_min + 0.34 * zspan;
  const double ground_mid = 0.5 * (ground_top + ground_bot);
  const double ground_half = 0.5 * (ground_top - ground_bot);

  auto clamp_center = [&](double v, double lo, double hi, double h) {
    return std::clamp(v, lo + h, hi - h);
  };

  // Terrain slab across the whole region.
  scene.primitives.push_back({PrimitiveKind::kBox, 3 /*terrain*/,
                              {cx, cy, ground_mid},
                              {sx, sy, ground_half},
                              0.0});

  // Road strip through the middle, slightly proud of the terrain.
  const double road_w = std::min(0.28 * sx, 3.5);
  const double road_yaw = rng.uniform(-0.25, 0.25);
  scene.primitives.push_back({PrimitiveKind::kBox, 1 /*road*/,
                              {cx + rng.uniform(-0.15, 0.15) * sx, cy,
                               ground_mid + 0.2 * ground_half},
                              {road_w, 0.92 * sy, ground_half},
                              road_yaw});
  const double road_x = scene.primitives.back().center.x;

  // Sidewalks flanking the road.
  const double walk_w = 0.45 * road_w;
  for (int side : {-1, 1}) {
    double wx = road_x + side * (road_w + walk_w + 0.1);
    wx = clamp_center(wx, region.x_min, region.x_max, 1.6 * walk_w);
    scene.primitives.push_back({PrimitiveKind::kBox, 2 /*sidewalk*/,
                                {wx, cy, ground_mid + 0.4 * ground_half},
                                {walk_w, 0.9 * sy, ground_half},
                                road_yaw});
  }

  const double scale = std::min(sx, sy) / 12.8;  // desk region => 1.0

  // Cars on or near the road.
  const int n_cars = rng.uniform_int(2, 4);
  for (int i = 0; i < n_cars; ++i) {
    const double hz = 0.8 * scale;
    Primitive car{PrimitiveKind::kBox, 5 /*car*/,
                  {road_x + rng.uniform(-0.8, 0.8) * road_w,
                   cy + rng.uniform(-0.75, 0.75) * sy, ground_top + hz},
                  {2.2 * scale, 1.0 * scale, hz},
                  road_yaw + rng.uniform(-0.15, 0.15) + (i % 2 ? M_PI : 0.0)};
    const double bound = std::abs(car.half.x) + std::abs(car.half.y);
    car.center.x = clamp_center(car.center.x, region.x_min, region.x_max, bound);
    car.center.y = clamp_center(car.center.y, region.y_min, region.y_max, bound);
    scene.primitives.push_back(car);
  }

  // Buildings off to the sides, plus one or two large mid-range occluders
  // whose shadows span a wide azimuth arc (visible only to global context).
  const int n_buildings = rng.uniform_int(1, 3);
  for (int i = 0; i < n_buildings; ++i) {
    const double hx = rng.uniform(0.1, 0.25) * sx;
    const double hy = rng.uniform(0.1, 0.25) * sy;
    const double hz = std::min(rng.uniform(1.5, 2.4) * scale,
                               0.5 * (region.z_max - ground_top) - 1e-3);
    const int side = rng.next_u64() & 1 ? 1 : -1;
    Primitive b{PrimitiveKind::kBox, 4 /*building*/,
                {clamp_center(cx + side * rng.uniform(0.55, 0.85) * sx,
                              region.x_min, region.x_max, hx + hy),
                 clamp_center(cy + rng.uniform(-0.7, 0.7) * sy, region.y_min,
                              region.y_max, hx + hy),
                 ground_top + hz},
                {hx, hy, hz},
                rng.uniform(-0.2, 0.2)};
    scene.primitives.push_back(b);
  }
  const int n_occluders = rng.uniform_int(1, 2);
  for (int i = 0; i < n_occluders; ++i) {
    const double hx = rng.uniform(0.18, 0.3) * sx;
    const double hy = rng.uniform(0.18, 0.3) * sy;
    const double hz = std::min(rng.uniform(1.8, 2.6) * scale,
                               0.5 * (region.z_max - ground_top) - 1e-3);
    const double ang = rng.uniform(-M_PI, M_PI);
    const double dist = rng.uniform(0.35, 0.6) * std::min(sx, sy);
    Primitive b{PrimitiveKind::kBox, 4 /*building*/,
                {clamp_center(cx + dist * std::cos(ang), region.x_min,
                              region.x_max, hx + hy),
                 clamp_center(cy + dist * std::sin(ang), region.y_min,
                              region.y_max, hx + hy),
                 ground_top + hz},
                {hx, hy, hz},
                rng.uniform(-0.3, 0.3)};
    scene.primitives.push_back(b);
  }

  // Poles along the sidewalks.
  const int n_poles = rng.uniform_int(1, 3);
  for (int i = 0; i < n_poles; ++i) {
    const double hz = std::min(rng.uniform(1.2, 1.9) * scale,
                               0.5 * (region.z_max - ground_top) - 1e-3);
    const int side = rng.next_u64() & 1 ? 1 : -1;
    scene.primitives.push_back(
        {PrimitiveKind::kCylinder, 6 /*pole*/,
         {clamp_center(road_x + side * (road_w + walk_w), region.x_min,
                       region.x_max, 0.3),
          clamp_center(cy + rng.uniform(-0.8, 0.8) * sy, region.y_min,
                       region.y_max, 0.3),
          ground_top + hz},
         {0.28 * std::max(scale, 0.25), 0.0, hz},
         0.0});
  }

  // Vegetation clumps near the edges.
  const int n_veg = rng.uniform_int(0, 2);
  for (int i = 0; i < n_veg; ++i) {
    const double rad = rng.uniform(0.6, 1.2) * std::max(scale, 0.25);
    const double hz = std::min(rng.uniform(0.8, 1.6) * scale,
                               0.5 * (region.z_max - ground_top) - 1e-3);
    const int side = rng.next_u64() & 1 ? 1 : -1;
    scene.primitives.push_back(
        {PrimitiveKind::kCylinder, 7 /*vegetation*/,
         {clamp_center(cx - side * rng.uniform(0.5, 0.9) * sx, region.x_min,
                       region.x_max, rad),
          clamp_center(cy + rng.uniform(-0.9, 0.9) * sy, region.y_min,
                       region.y_max, rad),
          ground_top + hz},
         {rad, 0.0, hz},
         0.0});
  }

  scene.validate(region);
  return scene;
}

SemanticGrid rasterize_truth(const SceneSpec& scene,
                             const CartesianGridSpec& spec) {
  SemanticGrid g = SemanticGrid::zeros(spec, kNumClasses);
  int64_t flat = 0;
  for (int ix = 0; ix < spec.bins_x; ++ix) {
    for (int iy = 0; iy < spec.bins_y; ++iy) {
      for (int iz = 0; iz < spec.bins_z; ++iz, ++flat) {
        g.labels[flat] = static_cast<uint16_t>(
            scene.class_at(spec.voxel_center_unchecked(ix, iy, iz)));
      }
    }
  }
  return g;
}

PointCloud simulate_lidar(const SceneSpec& scene, const LidarParams& params,
                          uint64_t seed) {
  if (params.n_beams < 1 || params.points_per_beam < 1) {
    throw_config("simulate_lidar needs >= 1 beam and >= 1 point per beam");
  }
  PointCloud pc;
  const CartPoint origin{0.0, 0.0, 0.0};
  for (int b = 0; b < params.n_beams; ++b) {
    const double elev =
        params.elevation_lo + (b + 0.5) * (params.elevation_hi -
                                           params.elevation_lo) /
                                  params.n_beams;
    const double ce = std::cos(elev), se = std::sin(elev);
    for (int j = 0; j < params.points_per_beam; ++j) {
      const double az = -M_PI + (j + 0.5) * 2.0 * M_PI / params.points_per_beam;
      const CartPoint dir{ce * std::cos(az), ce * std::sin(az), se};
      double t_hit = params.max_range;
      int hit_class = kFreeClass;
      for (const Primitive& prim : scene.primitives) {
        auto t = prim.ray_hit(origin, dir);
        if (t && *t < t_hit) {
          t_hit = *t;
          hit_class = prim.class_id;
        }
      }
      if (hit_class == kFreeClass) continue;
      Rng ray_rng = Rng::derive(
          seed, static_cast<uint64_t>(b) * params.points_per_beam + j);
      double noise = params.range_sigma * ray_rng.normal();
      noise = std::clamp(noise, -3.0 * params.range_sigma,
                         3.0 * params.range_sigma);
      const double t = t_hit + noise;
      pc.points.push_back(PointCloud::make_point(
          origin.x + t * dir.x, origin.y + t * dir.y, origin.z + t * dir.z,
          class_reflectance(hit_class)));
    }
  }
  return pc;
}

FeatureVolume synthesize_camera_volume(const SceneSpec& scene,
                                       const GridSpec& spec, int channels,
                                       uint64_t seed) {
  FeatureVolume vol = FeatureVolume::zeros(spec, channels);
  // Class base vectors depend only on the class id and channel count.
  std::vector<std::vector<double>> base(kNumClasses,
                                        std::vector<double>(channels, 0.0));
  for (int c = 1; c < kNumClasses; ++c) {
    Rng r = Rng::derive(0xba5e, static_cast<uint64_t>(c));
    for (int ch = 0; ch < channels; ++ch) base[c][ch] = r.uniform(-1.0, 1.0);
  }
  auto bins = grid_bins(spec);
  int64_t flat = 0;
  for (int i0 = 0; i0 < bins[0]; ++i0) {
    for (int i1 = 0; i1 < bins[1]; ++i1) {
      for (int i2 = 0; i2 < bins[2]; ++i2, ++flat) {
        CartPoint c;
        grid_voxel_centers(spec, i0, i1, i2, nullptr, &c);
        const int cls = scene.class_at(c);
        if (cls == kFreeClass) continue;
        vol.mask[flat] = 1;
        Rng noise = Rng::derive(seed ^ 0xca11e7a, static_cast<uint64_t>(flat));
        double* f = vol.data.data() + flat * channels;
        for (int ch = 0; ch < channels; ++ch) {
          f[ch] = base[cls][ch] + 0.05 * noise.uniform(-1.0, 1.0);
        }
      }
    }
  }
  return vol;
}

}  // namespace pvo
