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

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usar/metrics.hpp"
#include "usar/providers.hpp"
#include "usar/sources.hpp"

namespace usar::evalbench {

// --- Segmentation ----------------------------------------------------------

struct SegmentationEval {
  metrics::MetricReport report;
  // Samples the provider failed on; scored as empty predictions.
  std::vector<std::string> failed;
};

// Throws kEmptyDataset, or kMalformedFile naming a sample without a mask.
SegmentationEval EvalSegmentation(const std::vector<providers::SourceFrame>& dataset,
                                  providers::Provider& provider);

nlohmann::json ToJson(const SegmentationEval& eval);

// --- Measurements ----------------------------------------------------------

enum class Measure { kLength, kWidth, kThickness };
inline constexpr std::array<Measure, 3> kMeasures = {Measure::kLength, Measure::kWidth,
                                                     Measure::kThickness};
const char* ToString(Measure m);

struct ErrorStat {
  double mean_mm = 0.0;
  double std_mm = 0.0;  // population
  int n = 0;
};

struct ErrorRow {
  std::string label;
  std::array<std::optional<ErrorStat>, 3> stats;  // indexed by Measure

  const std::optional<ErrorStat>& at(Measure m) const {
    return stats[static_cast<int>(m)];
  }
};

struct SampleError {
  std::string name;
  geometry::View view = geometry::View::kCoronal;
  std::array<std::optional<double>, 3> model;     // |auto(pred) - auto(gt)|
  std::array<std::optional<double>, 3> baseline;  // |auto(gt) - reference|
};

struct FailedSample {
  std::string name;
  ErrorCode code;
};

// `model`: geometry on provider masks against geometry on the annotated
// masks. `baseline`: geometry on the annotated masks against the reference
// values carried by the dataset, where present.
struct ErrorTable {
  ErrorRow model;
  ErrorRow baseline;
  int n_samples = 0;  // samples measured on both paths
  std::vector<FailedSample> failed;
  std::vector<SampleError> samples;  // sorted by name
};

// Samples are processed in name order, so the table does not depend on the
// order of `dataset`. Throws kEmptyDataset, or kMalformedFile when a sample
// lacks a view or mask.
ErrorTable EvalMeasurements(const std::vector<providers::SourceFrame>& dataset,
                            providers::Provider& provider);

std::string ToText(const ErrorTable& table);
nlohmann::json ToJson(const ErrorTable& table);

// --- Latency bench ---------------------------------------------------------

struct StageStats {
  long count = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
};

// Linear-interpolated percentiles over `samples`.
StageStats Summarize(std::vector<double> samples);

struct BenchConfig {
  double fps = 30.0;
  int width = 512;
  int height = 512;
  std::chrono::milliseconds duration{10000};
  providers::LatencyModel latency;
  std::string provider = "oracle";
  std::uint64_t seed = 1;
};

// Stage order: acquire, encode, transit, decode run back to back on the raw
// path and add up to `end_to_end`. `segment` and `measure` belong to the
// overlapping segmentation path, whose total is `pair_end_to_end`.
inline constexpr std::array<const char*, 6> kStages = {"acquire", "encode",  "transit",
                                                       "decode",  "segment", "measure"};

struct LatencyReport {
  std::array<StageStats, 6> stages;  // parallel to kStages
  StageStats end_to_end;             // acquire start -> raw frame decoded
  StageStats pair_end_to_end;        // acquire start -> pair decoded
  StageStats lag_frames;             // newest raw id minus pair id on arrival
  double achieved_fps = 0.0;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t pairs_received = 0;
  BenchConfig config;

  const StageStats& stage(std::string_view name) const;
};

// Runs a loopback server on ephemeral ports with a phantom source and one
// instrumented datagram client for `config.duration`.
LatencyReport BenchLatency(const BenchConfig& config);

std::string ToText(const LatencyReport& report);
nlohmann::json ToJson(const LatencyReport& report);

}  // namespace usar::evalbench
