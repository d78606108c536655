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
#include <optional>
#include <string>
#include <string_view>

#include "usar/error.hpp"
#include "usar/geometry.hpp"
#include "usar/protocol.hpp"

namespace usar::server {

enum class Phase { kIdle, kStreaming, kCoronalReview, kTransverseReview, kComplete };

std::string_view ToString(Phase phase);

struct Command {
  enum class Kind {
    kCaptureCoronal,
    kCaptureTransverse,
    kAdjustBox,
    kAcceptMeasurement,
    kRecompute,
    kReset,
  };
  Kind kind = Kind::kReset;
  std::array<Eigen::Vector2d, 4> corners{};  // adjust_box only

  // Parses the text after `CMD `, e.g. "adjust_box 1 2 3 4 5 6 7 8".
  // Throws kUnknownCommand or kInvalidArgument.
  static Command Parse(std::string_view text);
};

std::string_view ToString(Command::Kind kind);

// A frame captured for review together with its current box.
struct Capture {
  protocol::AlignedPair pair;
  geometry::OrientedBox<double> box;
  geometry::MeasurementSource source = geometry::MeasurementSource::kAutomatic;
};

struct Transition {
  Phase from;
  Phase to;
};

// The two-phase measurement workflow. Not thread-safe: exactly one context
// owns a session and feeds it both frames and commands.
class Session {
 public:
  Phase phase() const { return phase_; }
  const geometry::KidneyMeasurement& measurement() const { return measurement_; }
  const std::optional<Capture>& capture() const { return capture_; }
  bool coronal_accepted() const { return measurement_.length_mm.has_value(); }
  int volume_computations() const { return volume_computations_; }
  const std::optional<protocol::AlignedPair>& latest() const { return latest_; }

  // idle -> streaming when frames start flowing; back to idle when they stop.
  std::optional<Transition> Start();
  std::optional<Transition> Stop();

  void OnPair(protocol::AlignedPair pair);

  // Applies a command. Throws kIllegalTransition, kNoFrameAvailable,
  // kMeasurementFailed, or kInvalidArgument; the session is unchanged on
  // any throw.
  std::optional<Transition> Handle(const Command& command);

  // One-line `key=value` summary: phase, box corners, committed values.
  std::string Describe() const;

 private:
  std::optional<Transition> MoveTo(Phase next);
  void CaptureLatest(geometry::View view);
  geometry::View ReviewView() const;

  Phase phase_ = Phase::kIdle;
  std::optional<protocol::AlignedPair> latest_;
  std::optional<Capture> capture_;
  geometry::KidneyMeasurement measurement_;
  int volume_computations_ = 0;
};

}  // namespace usar::server
