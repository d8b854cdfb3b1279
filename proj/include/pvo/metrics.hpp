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
#ifndef PVO_METRICS_HPP_
#define PVO_METRICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pvo/head.hpp"

namespace pvo {

// Rows index the truth label, columns the predicted label.
struct ConfusionTable {
  int n_classes = 0;
  std::vector<int64_t> counts;  // n_classes * n_classes

  explicit ConfusionTable(int n_classes_)
      : n_classes(n_classes_),
        counts(static_cast<size_t>(n_classes_) * n_classes_, 0) {}

  int64_t& at(int truth, int pred) {
    return counts[static_cast<size_t>(truth) * n_classes + pred];
  }
  int64_t at(int truth, int pred) const {
    return counts[static_cast<size_t>(truth) * n_classes + pred];
  }
  int64_t total() const;
  void merge(const ConfusionTable& other);
};

// Adds per-voxel (truth, pred) pairs; associative across scenes.
void accumulate(const SemanticGrid& pred, const SemanticGrid& truth,
                ConfusionTable& table);

// Occupied = any class != free. Returns 1.0 when neither truth nor prediction
// contains an occupied voxel.
double geometric_iou(const ConfusionTable& table);

struct MeanIou {
  std::vector<double> per_class;  // indexed by class id; NaN-free: excluded
  std::vector<bool> included;     // class present in truth or prediction
  double miou = 0.0;
};

// Per non-free class IoU; classes absent from both truth and prediction are
// excluded from the mean. All classes absent => miou 1.0 by the same
// convention as geometric_iou.
MeanIou mean_iou(const ConfusionTable& table);

struct BandIou {
  double radius_lo = 0.0, radius_hi = 0.0;
  int64_t voxels = 0;
  double miou = 0.0;
  bool valid = false;  // false for empty bands (excluded from reports)
};

// Partitions output voxels by the BEV radius of their centers into equal-width
// bands over [0, max center radius] and evaluates mean_iou per band.
std::vector<BandIou> range_stratified_miou(const SemanticGrid& pred,
                                           const SemanticGrid& truth,
                                           int n_bands);

// Shard-friendly variant: adds one (pred, truth) pair into per-band confusion
// tables so multiple scenes can be merged before computing per-band mIoU.
void accumulate_banded(const SemanticGrid& pred, const SemanticGrid& truth,
                       std::vector<ConfusionTable>& tables);
std::vector<BandIou> bands_from_tables(const std::vector<ConfusionTable>& tables,
                                       const CartesianGridSpec& spec);

// {"iou": ..., "miou": ..., "per_class": {...}, "bands": [...]}
std::string metrics_report_json(const ConfusionTable& table,
                                const std::vector<BandIou>& bands);
std::string metrics_report_csv(const ConfusionTable& table);

}  // namespace pvo

#endif  // PVO_METRICS_HPP_
