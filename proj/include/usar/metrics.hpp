// Copyright 2026 The usar Authors. All Rights Reserved.
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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usar/mask.hpp"

namespace usar::metrics {

struct ConfusionCounts {
  long true_positive = 0;
  long false_positive = 0;
  long false_negative = 0;

  bool Empty() const {
    return true_positive == 0 && false_positive == 0 && false_negative == 0;
  }
};

// Classes scored by default: cortex and central complex.
inline const std::vector<std::uint8_t>& DefaultClasses() {
  static const std::vector<std::uint8_t> kClasses{1, 2};
  return kClasses;
}

ConfusionCounts Confusion(const Mask& pred, const Mask& gt,
                          std::uint8_t class_id);

// Both are 1.0 when the class is absent from both masks.
double Dice(const ConfusionCounts& c);
double Iou(const ConfusionCounts& c);
double Dice(const Mask& pred, const Mask& gt, std::uint8_t class_id);
double Iou(const Mask& pred, const Mask& gt, std::uint8_t class_id);

// IoU thresholds 0.50, 0.55, ..., 0.95 expressed in hundredths.
inline constexpr int kIouThresholdsPct[] = {50, 55, 60, 65, 70,
                                            75, 80, 85, 90, 95};

// Identifies how AP was computed so numbers are only compared like for like.
inline constexpr const char* kMapProtocol =
    "iou-sweep-0.50:0.05:0.95/one-instance-per-class-per-image";

struct ClassMetrics {
  std::uint8_t class_id = 0;
  double dice = 1.0;
  double iou = 1.0;
  std::optional<double> ap;  // absent when no image contains the class
  int n_scored_images = 0;   // images contributing to AP
};

struct ImageMetrics {
  std::string name;
  std::vector<double> dice;  // parallel to MetricReport::per_class
  std::vector<double> iou;
};

struct TimingSummary {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  long count = 0;
};

struct MetricReport {
  std::string model = "model";
  std::vector<ClassMetrics> per_class;
  double mean_dice = 1.0;
  double mean_iou = 1.0;
  double map = 1.0;
  int n_images = 0;
  std::vector<ImageMetrics> per_image;
  std::optional<TimingSummary> inference;
  std::string map_protocol = kMapProtocol;
};

// Per-class AP and their mean. Throws kEmptyDataset / kShapeMismatch.
MetricReport MeanAveragePrecision(const std::vector<Mask>& preds,
                                  const std::vector<Mask>& gts,
                                  const std::vector<std::uint8_t>& classes =
                                      DefaultClasses());

// Full report: per-image and per-class DICE/IoU plus AP/mAP.
MetricReport Evaluate(const std::vector<Mask>& preds,
                      const std::vector<Mask>& gts,
                      const std::vector<std::string>& names = {},
                      const std::vector<std::uint8_t>& classes =
                          DefaultClasses());

// Fixed-width table: Model | mAP | DICE | IoU | Inference time (ms).
std::string ToText(const MetricReport& report);
nlohmann::json ToJson(const MetricReport& report);

}  // namespace usar::metrics
