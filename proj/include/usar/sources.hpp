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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "usar/geometry.hpp"
#include "usar/mask.hpp"

namespace usar::providers {

enum class ArtifactMode { kNone, kMild, kSevere };

// Synthetic kidney: an outer cortex ellipse with a nested central complex,
// drifting on a Lissajous path to mimic probe motion.
struct PhantomSpec {
  int width = 512;
  int height = 512;
  double semi_major = 150.0;  // px
  double semi_minor = 70.0;   // px
  double inner_scale = 0.55;  // central complex semi-axes as a fraction
  double theta = 0.3;         // rad
  double drift_amplitude = 6.0;  // px
  double drift_period = 90.0;    // frames
  double noise = 0.25;           // speckle strength in [0, 1]
  ArtifactMode artifact = ArtifactMode::kNone;
  double pixel_spacing = 0.5;  // mm/px
  std::uint64_t seed = 1;

  void Validate() const;
};

struct PhantomFrame {
  GrayImage image;
  Mask mask;  // ground truth
  Eigen::Vector2d center;
};

// Deterministic in (spec, t) on every platform: the noise comes from a
// counter-based hash, not from std:: distributions.
PhantomFrame PhantomNext(const PhantomSpec& spec, std::uint64_t t);

// Analytic ground-truth dimensions of the phantom's outer outline under the
// unit-footprint convention: (2a + 1, 2b + 1) px scaled to mm.
geometry::KidneyMeasurement PhantomTruth(const PhantomSpec& spec,
                                         geometry::View view);

// One acquisition from any source.
struct SourceFrame {
  std::uint32_t index = 0;
  std::string name;
  GrayImage image;
  std::optional<Mask> ground_truth;
  double pixel_spacing = 1.0;
  std::optional<geometry::View> view;
  geometry::KidneyMeasurement reference;  // annotated values, when known
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<SourceFrame> Next() = 0;
};

class PhantomSource : public FrameSource {
 public:
  explicit PhantomSource(PhantomSpec spec,
                         std::optional<std::uint64_t> limit = std::nullopt);
  std::optional<SourceFrame> Next() override;

 private:
  PhantomSpec spec_;
  std::optional<std::uint64_t> limit_;
  std::uint64_t t_ = 0;
};

struct ReplayMeta {
  std::optional<double> pixel_spacing_mm;
  std::optional<geometry::View> view;
  geometry::KidneyMeasurement reference;
};

// Parses `<stem>.meta`: key=value lines; pixel_spacing_mm, view, and the
// optional reference_length_mm / reference_width_mm / reference_thickness_mm.
ReplayMeta ReadMeta(const std::filesystem::path& path);
void WriteMeta(const std::filesystem::path& path, const ReplayMeta& meta);

// `<stem>.pgm` frames with optional `<stem>.mask.pgm` and `<stem>.meta`,
// yielded in lexicographic filename order.
class ReplaySource : public FrameSource {
 public:
  explicit ReplaySource(const std::filesystem::path& directory,
                        double default_spacing = 1.0);
  std::optional<SourceFrame> Next() override;

  std::size_t size() const { return stems_.size(); }

 private:
  std::filesystem::path dir_;
  double default_spacing_;
  std::vector<std::string> stems_;
  std::size_t next_ = 0;
};

// Reads the whole directory eagerly.
std::vector<SourceFrame> LoadReplay(const std::filesystem::path& directory,
                                    double default_spacing = 1.0);

// Writes frames in replay layout; frames lacking a mask get none.
void WriteReplay(const std::filesystem::path& directory,
                 const std::vector<SourceFrame>& frames);

// Phantom evaluation set: `coronal` + `transverse` samples with randomized
// geometry, analytic reference measurements in the sidecar.
std::vector<SourceFrame> MakePhantomDataset(int coronal, int transverse,
                                            std::uint64_t seed,
                                            ArtifactMode artifact =
                                                ArtifactMode::kNone,
                                            double pixel_spacing = 0.5);

}  // namespace usar::providers
