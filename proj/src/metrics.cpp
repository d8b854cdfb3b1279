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
#include "pvo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "pvo/synth.hpp"

namespace pvo {

int64_t ConfusionTable::total() const {
  int64_t n = 0;
  for (int64_t c : counts) n += c;
  return n;
}

void ConfusionTable::merge(const ConfusionTable& other) {
  if (other.n_classes != n_classes) {
    throw_data("confusion table class count mismatch");
  }
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate(const SemanticGrid& pred, const SemanticGrid& truth,
                ConfusionTable& table) {
  if (pred.n_classes != truth.n_classes || pred.n_classes != table.n_classes) {
    throw_data("accumulate: class count mismatch");
  }
  if (pred.numel() != truth.numel() ||
      pred.spec.bins_x != truth.spec.bins_x ||
      pred.spec.bins_y != truth.spec.bins_y ||
      pred.spec.bins_z != truth.spec.bins_z) {
    throw_data("accumulate: grid spec mismatch");
  }
  for (int64_t v = 0; v < pred.numel(); ++v) {
    ++table.at(truth.labels[v], pred.labels[v]);
  }
}

double geometric_iou(const ConfusionTable& table) {
  if (table.total() == 0) throw_data("geometric_iou: empty table");
  int64_t tp = 0, fp = 0, fn = 0;
  for (int t = 0; t < table.n_classes; ++t) {
    for (int p = 0; p < table.n_classes; ++p) {
      const int64_t n = table.at(t, p);
      if (t != 0 && p != 0) tp += n;
      if (t == 0 && p != 0) fp += n;
      if (t != 0 && p == 0) fn += n;
    }
  }
  if (tp + fp + fn == 0) return 1.0;  // nothing occupied anywhere
  return static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
}

MeanIou mean_iou(const ConfusionTable& table) {
  MeanIou res;
  res.per_class.assign(table.n_classes, 0.0);
  res.included.assign(table.n_classes, false);
  std::vector<int64_t> row(table.n_classes, 0), col(table.n_classes, 0);
  for (int t = 0; t < table.n_classes; ++t) {
    for (int p = 0; p < table.n_classes; ++p) {
      row[t] += table.at(t, p);
      col[p] += table.at(t, p);
    }
  }
  double sum = 0.0;
  int included = 0;
  for (int c = 1; c < table.n_classes; ++c) {  // class 0 = free, excluded
    const int64_t uni = row[c] + col[c] - table.at(c, c);
    if (uni == 0) continue;  // absent from truth and prediction
    res.included[c] = true;
    res.per_class[c] = static_cast<double>(table.at(c, c)) / uni;
    sum += res.per_class[c];
    ++included;
  }
  res.miou = included == 0 ? 1.0 : sum / included;
  return res;
}

namespace {

double max_center_radius(const CartesianGridSpec& spec) {
  const CartPoint c0 = spec.voxel_center_unchecked(0, 0, 0);
  const CartPoint c1 =
      spec.voxel_center_unchecked(spec.bins_x - 1, spec.bins_y - 1, 0);
  const double mx = std::max(std::abs(c0.x), std::abs(c1.x));
  const double my = std::max(std::abs(c0.y), std::abs(c1.y));
  return std::hypot(mx, my);
}

}  // namespace

void accumulate_banded(const SemanticGrid& pred, const SemanticGrid& truth,
                       std::vector<ConfusionTable>& tables) {
  const int n_bands = static_cast<int>(tables.size());
  if (n_bands < 1) throw_config("accumulate_banded needs >= 1 band");
  const CartesianGridSpec& spec = truth.spec;
  const double width = max_center_radius(spec) / n_bands;
  int64_t flat = 0;
  for (int ix = 0; ix < spec.bins_x; ++ix) {
    for (int iy = 0; iy < spec.bins_y; ++iy) {
      const CartPoint c = spec.voxel_center_unchecked(ix, iy, 0);
      int band = static_cast<int>(std::hypot(c.x, c.y) / width);
      if (band >= n_bands) band = n_bands - 1;
      for (int iz = 0; iz < spec.bins_z; ++iz, ++flat) {
        ++tables[band].at(truth.labels[flat], pred.labels[flat]);
      }
    }
  }
}

std::vector<BandIou> bands_from_tables(const std::vector<ConfusionTable>& tables,
                                       const CartesianGridSpec& spec) {
  const int n_bands = static_cast<int>(tables.size());
  const double width = max_center_radius(spec) / n_bands;
  std::vector<BandIou> bands(n_bands);
  for (int b = 0; b < n_bands; ++b) {
    bands[b].radius_lo = b * width;
    bands[b].radius_hi = (b + 1) * width;
    bands[b].voxels = tables[b].total();
    if (bands[b].voxels > 0) {
      bands[b].valid = true;
      bands[b].miou = mean_iou(tables[b]).miou;
    }
  }
  return bands;
}

std::vector<BandIou> range_stratified_miou(const SemanticGrid& pred,
                                           const SemanticGrid& truth,
                                           int n_bands) {
  if (n_bands < 1) throw_config("range_stratified_miou needs >= 1 band");
  std::vector<ConfusionTable> tables(n_bands, ConfusionTable(truth.n_classes));
  accumulate_banded(pred, truth, tables);
  return bands_from_tables(tables, truth.spec);
}

std::string metrics_report_json(const ConfusionTable& table,
                                const std::vector<BandIou>& bands) {
  MeanIou mi = mean_iou(table);
  nlohmann::json j;
  j["iou"] = geometric_iou(table);
  j["miou"] = mi.miou;
  j["per_class"] = nlohmann::json::object();
  for (int c = 1; c < table.n_classes; ++c) {
    if (mi.included[c]) j["per_class"][class_name(c)] = mi.per_class[c];
  }
  j["bands"] = nlohmann::json::array();
  for (const BandIou& b : bands) {
    if (!b.valid) continue;  // empty bands are excluded
    j["bands"].push_back({{"radius_lo", b.radius_lo},
                          {"radius_hi", b.radius_hi},
                          {"voxels", b.voxels},
                          {"miou", b.miou}});
  }
  return j.dump(2);
}

std::string metrics_report_csv(const ConfusionTable& table) {
  MeanIou mi = mean_iou(table);
  std::ostringstream os;
  os << "class,iou\n";
  char buf[64];
  for (int c = 1; c < table.n_classes; ++c) {
    if (!mi.included[c]) continue;
    std::snprintf(buf, sizeof(buf), "%.6f", mi.per_class[c]);
    os << class_name(c) << "," << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.6f", mi.miou);
  os << "miou," << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f", geometric_iou(table));
  os << "iou," << buf << "\n";
  return os.str();
}

}  // namespace pvo
