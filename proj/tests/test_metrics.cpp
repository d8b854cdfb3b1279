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
#include "pvo/metrics.hpp"
#include "pvo/rng.hpp"

using namespace pvo;

namespace {

CartesianGridSpec spec442() { return {-2, 2, -2, 2, -1, 1, 4, 4, 2}; }

SemanticGrid random_grid(const CartesianGridSpec& spec, int n_classes,
                         uint64_t seed) {
  SemanticGrid g = SemanticGrid::zeros(spec, n_classes);
  Rng rng(seed);
  for (auto& l : g.labels) {
    l = static_cast<uint16_t>(rng.uniform_int(0, n_classes - 1));
  }
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("perfect prediction fills only the diagonal") {
  SemanticGrid truth = random_grid(spec442(), 4, 1);
  ConfusionTable t(4);
  accumulate(truth, truth, t);
  CHECK(t.total() == truth.numel());
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i != j) CHECK(t.at(i, j) == 0);
    }
  CHECK(geometric_iou(t) == 1.0);
  MeanIou mi = mean_iou(t);
  CHECK(mi.miou == 1.0);
  for (int c = 1; c < 4; ++c) {
    if (mi.included[c]) CHECK(mi.per_class[c] == 1.0);
  }
}

TEST_CASE("disjoint single-class grids fill one off-diagonal cell") {
  SemanticGrid truth = SemanticGrid::zeros(spec442(), 4);
  SemanticGrid pred = SemanticGrid::zeros(spec442(), 4);
  for (auto& l : truth.labels) l = 2;
  for (auto& l : pred.labels) l = 3;
  ConfusionTable t(4);
  accumulate(pred, truth, t);
  CHECK(t.at(2, 3) == truth.numel());
  CHECK(t.total() == truth.numel());
  // Both classes are present but fully confused: IoU 0 for each.
  MeanIou mi = mean_iou(t);
  CHECK(mi.per_class[2] == 0.0);
  CHECK(mi.per_class[3] == 0.0);
  CHECK(mi.miou == 0.0);
  // Geometrically everything is occupied in both: IoU 1.
  CHECK(geometric_iou(t) == 1.0);
}

TEST_CASE("accumulate matches a hand loop oracle") {
  SemanticGrid truth = random_grid(spec442(), 4, 3);
  SemanticGrid pred = random_grid(spec442(), 4, 4);
  ConfusionTable t(4);
  accumulate(pred, truth, t);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      int64_t count = 0;
      for (int64_t v = 0; v < truth.numel(); ++v) {
        if (truth.labels[v] == a && pred.labels[v] == b) ++count;
      }
      CHECK(t.at(a, b) == count);
    }

  SemanticGrid other = random_grid({-2, 2, -2, 2, -1, 1, 4, 4, 4}, 4, 5);
  CHECK_THROWS_AS(accumulate(other, truth, t), Error);
}

TEST_CASE("geometric IoU closed forms") {
  // Truth occupies 8 voxels; prediction covers those 8 plus 8 extra.
  SemanticGrid truth = SemanticGrid::zeros(spec442(), 3);
  SemanticGrid pred = SemanticGrid::zeros(spec442(), 3);
  for (int i = 0; i < 8; ++i) truth.labels[i] = 1;
  for (int i = 0; i < 16; ++i) pred.labels[i] = 1;
  ConfusionTable t(3);
  accumulate(pred, truth, t);
  CHECK(geometric_iou(t) == doctest::Approx(0.5).epsilon(1e-15));

  // Prediction all free while truth has occupancy: zero.
  SemanticGrid none = SemanticGrid::zeros(spec442(), 3);
  ConfusionTable t2(3);
  accumulate(none, truth, t2);
  CHECK(geometric_iou(t2) == 0.0);

  // Nothing occupied anywhere: 1 by convention.
  ConfusionTable t3(3);
  accumulate(none, none, t3);
  CHECK(geometric_iou(t3) == 1.0);

  CHECK_THROWS_AS(geometric_iou(ConfusionTable(3)), Error);
}

TEST_CASE("mean IoU against hand-computed confusion arithmetic") {
  ConfusionTable t(4);
  t.at(1, 1) = 10;
  t.at(1, 2) = 5;   // class 1 truth predicted as 2
  t.at(2, 2) = 20;
  t.at(0, 1) = 5;   // free predicted as 1
  t.at(3, 0) = 7;   // class 3 predicted free
  // class1: diag 10, union 15 + 15 - 10 = 20 -> 0.5
  // class2: diag 20, union 20 + 25 - 20 = 25 -> 0.8
  // class3: diag 0, union 7 -> 0
  MeanIou mi = mean_iou(t);
  CHECK(mi.per_class[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mi.per_class[2] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(mi.per_class[3] == 0.0);
  CHECK(mi.miou == doctest::Approx((0.5 + 0.8 + 0.0) / 3).epsilon(1e-15));

  // A class absent from both truth and prediction is excluded.
  ConfusionTable t2(4);
  t2.at(1, 1) = 4;
  MeanIou mi2 = mean_iou(t2);
  CHECK(mi2.included[1]);
  CHECK_FALSE(mi2.included[2]);
  CHECK_FALSE(mi2.included[3]);
  CHECK(mi2.miou == 1.0);
}

TEST_CASE("per-class IoU values stay in [0,1]") {
  SemanticGrid truth = random_grid(spec442(), 5, 7);
  SemanticGrid pred = random_grid(spec442(), 5, 8);
  ConfusionTable t(5);
  accumulate(pred, truth, t);
  CHECK(geometric_iou(t) >= 0.0);
  CHECK(geometric_iou(t) <= 1.0);
  MeanIou mi = mean_iou(t);
  for (int c = 1; c < 5; ++c) {
    if (!mi.included[c]) continue;
    CHECK(mi.per_class[c] >= 0.0);
    CHECK(mi.per_class[c] <= 1.0);
  }
}

TEST_CASE("metrics are invariant to consistent relabeling") {
  SemanticGrid truth = random_grid(spec442(), 4, 9);
  SemanticGrid pred = random_grid(spec442(), 4, 10);
  ConfusionTable t(4);
  accumulate(pred, truth, t);
  MeanIou base = mean_iou(t);

  // Permute the non-free classes 1->2->3->1 in both grids.
  auto permute = [](SemanticGrid g) {
    for (auto& l : g.labels) {
      if (l != 0) l = static_cast<uint16_t>(l % 3 + 1);
    }
    return g;
  };
  ConfusionTable tp(4);
  accumulate(permute(pred), permute(truth), tp);
  MeanIou perm = mean_iou(tp);
  CHECK(perm.miou == doctest::Approx(base.miou).epsilon(1e-15));
  CHECK(geometric_iou(tp) == doctest::Approx(geometric_iou(t)).epsilon(1e-15));
  CHECK(perm.per_class[2] == doctest::Approx(base.per_class[1]).epsilon(1e-15));
  CHECK(perm.per_class[3] == doctest::Approx(base.per_class[2]).epsilon(1e-15));
  CHECK(perm.per_class[1] == doctest::Approx(base.per_class[3]).epsilon(1e-15));
}

TEST_CASE("shard accumulation equals concatenated accumulation") {
  SemanticGrid t1 = random_grid(spec442(), 4, 11);
  SemanticGrid p1 = random_grid(spec442(), 4, 12);
  SemanticGrid t2 = random_grid(spec442(), 4, 13);
  SemanticGrid p2 = random_grid(spec442(), 4, 14);

  ConfusionTable shard1(4), shard2(4), merged(4), direct(4);
  accumulate(p1, t1, shard1);
  accumulate(p2, t2, shard2);
  merged.merge(shard1);
  merged.merge(shard2);
  accumulate(p1, t1, direct);
  accumulate(p2, t2, direct);
  for (size_t i = 0; i < merged.counts.size(); ++i) {
    CHECK(merged.counts[i] == direct.counts[i]);
  }
}

TEST_CASE("range-stratified mIoU") {
  SemanticGrid truth = random_grid(spec442(), 4, 15);
  // Perfect prediction: every nonempty band reports 1.0.
  auto bands = range_stratified_miou(truth, truth, 3);
  for (const auto& b : bands) {
    if (b.valid) CHECK(b.miou == 1.0);
  }

  // Masked-accumulate oracle for a random prediction.
  SemanticGrid pred = random_grid(spec442(), 4, 16);
  const int n_bands = 2;
  auto got = range_stratified_miou(pred, truth, n_bands);
  const CartesianGridSpec spec = spec442();
  // Oracle: per-band confusion built by explicit masking.
  for (int band = 0; band < n_bands; ++band) {
    ConfusionTable t(4);
    const double width = got[band].radius_hi - got[band].radius_lo;
    int64_t flat = 0;
    for (int ix = 0; ix < spec.bins_x; ++ix)
      for (int iy = 0; iy < spec.bins_y; ++iy)
        for (int iz = 0; iz < spec.bins_z; ++iz, ++flat) {
          CartPoint c = spec.voxel_center_unchecked(ix, iy, iz);
          int b = static_cast<int>(std::hypot(c.x, c.y) / width);
          if (b >= n_bands) b = n_bands - 1;
          if (b != band) continue;
          ++t.at(truth.labels[flat], pred.labels[flat]);
        }
    if (t.total() == 0) {
      CHECK_FALSE(got[band].valid);
    } else {
      CHECK(got[band].miou == doctest::Approx(mean_iou(t).miou).epsilon(1e-15));
      CHECK(got[band].voxels == t.total());
    }
  }

  CHECK_THROWS_AS(range_stratified_miou(pred, truth, 0), Error);
}

TEST_CASE("report emission") {
  SemanticGrid truth = random_grid(spec442(), 4, 17);
  ConfusionTable t(4);
  accumulate(truth, truth, t);
  auto bands = range_stratified_miou(truth, truth, 2);
  const std::string json = metrics_report_json(t, bands);
  CHECK(json.find("\"iou\"") != std::string::npos);
  CHECK(json.find("\"miou\"") != std::string::npos);
  CHECK(json.find("\"per_class\"") != std::string::npos);
  CHECK(json.find("\"bands\"") != std::string::npos);
  const std::string csv = metrics_report_csv(t);
  CHECK(csv.find("class,iou") == 0);
  CHECK(csv.find("miou,") != std::string::npos);
}

TEST_SUITE_END();
