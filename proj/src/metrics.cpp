// Copyright 2026 The dilfcn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dilfcn/metrics.hpp"

#include <cstdio>

namespace dilfcn {

ConfusionMatrix::ConfusionMatrix(std::size_t n_class) : n_(n_class), counts_(n_class * n_class, 0) {
  if (n_class == 0) throw DataError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (std::uint64_t v : counts_) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::truth_count(std::size_t i) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < n_; ++j) t += (*this)(i, j);
  return t;
}

std::uint64_t ConfusionMatrix::pred_count(std::size_t i) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < n_; ++j) t += (*this)(j, i);
  return t;
}

void ConfusionMatrix::accumulate(const LabelMap& predicted, const LabelMap& truth,
                                 std::uint16_t ignore_label) {
  if (predicted.n != truth.n || predicted.h != truth.h || predicted.w != truth.w) {
    throw DataError("prediction " + std::to_string(predicted.h) + "x" + std::to_string(predicted.w) +
                    " and truth " + std::to_string(truth.h) + "x" + std::to_string(truth.w) +
                    " differ in shape");
  }
  for (std::size_t b = 0; b < truth.n; ++b) {
    for (std::size_t y = 0; y < truth.h; ++y) {
      for (std::size_t x = 0; x < truth.w; ++x) {
        const std::uint16_t t = truth.at(b, y, x);
        if (t == ignore_label) continue;
        const std::uint16_t p = predicted.at(b, y, x);
        if (t >= n_ || p >= n_) {
          throw DataError("class out of range at pixel (n=" + std::to_string(b) + ", y=" +
                          std::to_string(y) + ", x=" + std::to_string(x) + "): truth " +
                          std::to_string(t) + ", prediction " + std::to_string(p) + " with " +
                          std::to_string(n_) + " classes");
        }
        ++(*this)(t, p);
      }
    }
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw DataError("cannot merge confusion matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

namespace {

void require_counts(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("metrics need a non-empty confusion matrix");
}

double iou(const ConfusionMatrix& cm, std::size_t i) {
  const double inter = static_cast<double>(cm(i, i));
  const double uni = static_cast<double>(cm.truth_count(i) + cm.pred_count(i)) - inter;
  return inter / uni;
}

}  // namespace

double pixel_accuracy(const ConfusionMatrix& cm) {
  require_counts(cm);
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < cm.n_class(); ++i) diag += cm(i, i);
  return static_cast<double>(diag) / static_cast<double>(cm.total());
}

double mean_accuracy(const ConfusionMatrix& cm) {
  require_counts(cm);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < cm.n_class(); ++i) {
    const std::uint64_t t = cm.truth_count(i);
    if (t == 0) continue;
    sum += static_cast<double>(cm(i, i)) / static_cast<double>(t);
    ++present;
  }
  return sum / static_cast<double>(present);
}

double mean_iou(const ConfusionMatrix& cm) {
  require_counts(cm);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < cm.n_class(); ++i) {
    if (cm.truth_count(i) + cm.pred_count(i) == 0) continue;
    sum += iou(cm, i);
    ++present;
  }
  return sum / static_cast<double>(present);
}

double fw_iou(const ConfusionMatrix& cm) {
  require_counts(cm);
  double sum = 0.0;
  for (std::size_t i = 0; i < cm.n_class(); ++i) {
    const std::uint64_t t = cm.truth_count(i);
    if (t == 0) continue;
    sum += static_cast<double>(t) * iou(cm, i);
  }
  return sum / static_cast<double>(cm.total());
}

SegmentationScores score(const ConfusionMatrix& cm) {
  return SegmentationScores{pixel_accuracy(cm), mean_accuracy(cm), mean_iou(cm), fw_iou(cm)};
}

std::string metrics_csv(const SegmentationScores& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "metric,value\npixel_accuracy,%.6f\nmean_accuracy,%.6f\nmean_iou,%.6f\nfw_iou,%.6f\n",
                s.pixel_accuracy, s.mean_accuracy, s.mean_iou, s.fw_iou);
  return buf;
}

}  // namespace dilfcn
