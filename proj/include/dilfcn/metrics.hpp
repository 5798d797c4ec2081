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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dilfcn/layers.hpp"

namespace dilfcn {

/// counts(i, j) = pixels of true class i predicted as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_class);

  std::size_t n_class() const noexcept { return n_; }
  std::uint64_t operator()(std::size_t truth, std::size_t pred) const { return counts_[truth * n_ + pred]; }
  std::uint64_t& operator()(std::size_t truth, std::size_t pred) { return counts_[truth * n_ + pred]; }
  std::uint64_t total() const noexcept;

  /// Pixels whose true class is i (row sum) / predicted as i (column sum).
  std::uint64_t truth_count(std::size_t i) const;
  std::uint64_t pred_count(std::size_t i) const;

  /// Counts every pixel whose truth is not ignore_label. Throws DataError
  /// naming the pixel when a class index is out of range.
  void accumulate(const LabelMap& predicted, const LabelMap& truth,
                  std::uint16_t ignore_label = kIgnoreLabel);

  /// Entrywise sum. Throws DataError when class counts differ.
  void merge(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

/// sum_i N_ii / sum_ij N_ij.
double pixel_accuracy(const ConfusionMatrix& cm);
/// Mean of N_ii / sum_j N_ij over classes that occur in the truth.
double mean_accuracy(const ConfusionMatrix& cm);
/// Mean IoU over classes present in truth or prediction.
double mean_iou(const ConfusionMatrix& cm);
/// IoU weighted by each class's true pixel frequency.
double fw_iou(const ConfusionMatrix& cm);

struct SegmentationScores {
  double pixel_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double mean_iou = 0.0;
  double fw_iou = 0.0;
};

SegmentationScores score(const ConfusionMatrix& cm);

/// `metric,value` header followed by the four metrics at 6 decimals.
std::string metrics_csv(const SegmentationScores& s);

}  // namespace dilfcn
