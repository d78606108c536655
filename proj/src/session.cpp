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

#include "usar/session.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

namespace usar::server {

using geometry::MeasurementSource;
using geometry::View;

std::string_view ToString(Phase phase) {
  switch (phase) {
    case Phase::kIdle: return "idle";
    case Phase::kStreaming: return "streaming";
    case Phase::kCoronalReview: return "coronal_review";
    case Phase::kTransverseReview: return "transverse_review";
    case Phase::kComplete: return "complete";
  }
  return "?";
}

std::string_view ToString(Command::Kind kind) {
  switch (kind) {
    case Command::Kind::kCaptureCoronal: return "capture_coronal";
    case Command::Kind::kCaptureTransverse: return "capture_transverse";
    case Command::Kind::kAdjustBox: return "adjust_box";
    case Command::Kind::kAcceptMeasurement: return "accept_measurement";
    case Command::Kind::kRecompute: return "recompute";
    case Command::Kind::kReset: return "reset";
  }
  return "?";
}

Command Command::Parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string name;
  in >> name;
  std::vector<std::string> args;
  for (std::string a; in >> a;) args.push_back(a);

  Command cmd;
  bool found = false;
  for (auto kind : {Kind::kCaptureCoronal, Kind::kCaptureTransverse, Kind::kAdjustBox,
                    Kind::kAcceptMeasurement, Kind::kRecompute, Kind::kReset}) {
    if (name == ToString(kind)) {
      cmd.kind = kind;
      found = true;
    }
  }
  if (!found) throw Error(ErrorCode::kUnknownCommand, "'" + name + "'");

  if (cmd.kind != Kind::kAdjustBox) {
    if (!args.empty()) {
      throw Error(ErrorCode::kInvalidArgument, name + " takes no arguments");
    }
    return cmd;
  }
  if (args.size() != 8) {
    throw Error(ErrorCode::kInvalidArgument, "adjust_box needs 8 numbers");
  }
  for (int i = 0; i < 8; ++i) {
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(args[i], &used);
      if (used != args[i].size() || !std::isfinite(v)) throw 0;
    } catch (...) {
      throw Error(ErrorCode::kInvalidArgument, "bad coordinate '" + args[i] + "'");
    }
    cmd.corners[i / 2][i % 2] = v;
  }
  return cmd;
}

std::optional<Transition> Session::MoveTo(Phase next) {
  if (next == phase_) return std::nullopt;
  const Transition t{phase_, next};
  phase_ = next;
  return t;
}

std::optional<Transition> Session::Start() {
  if (phase_ != Phase::kIdle) return std::nullopt;
  return MoveTo(Phase::kStreaming);
}

std::optional<Transition> Session::Stop() {
  if (phase_ != Phase::kStreaming) return std::nullopt;
  return MoveTo(Phase::kIdle);
}

void Session::OnPair(protocol::AlignedPair pair) { latest_ = std::move(pair); }

View Session::ReviewView() const {
  return phase_ == Phase::kCoronalReview ? View::kCoronal : View::kTransverse;
}

void Session::CaptureLatest(View view) {
  if (!latest_) throw Error(ErrorCode::kNoFrameAvailable, "no segmented frame yet");
  geometry::MaskMeasurement m;
  try {
    m = geometry::MeasureMask(latest_->mask, view);
  } catch (const Error& e) {
    throw Error(ErrorCode::kMeasurementFailed, e.what());
  }
  capture_ = Capture{*latest_, m.box, MeasurementSource::kAutomatic};
}

std::optional<Transition> Session::Handle(const Command& command) {
  auto illegal = [&] {
    return Error(ErrorCode::kIllegalTransition,
                 std::string(ToString(command.kind)) + " in " +
                     std::string(ToString(phase_)));
  };
  const bool reviewing =
      phase_ == Phase::kCoronalReview || phase_ == Phase::kTransverseReview;

  switch (command.kind) {
    case Command::Kind::kReset:
      if (phase_ == Phase::kIdle) throw illegal();
      capture_.reset();
      measurement_ = {};
      return MoveTo(Phase::kStreaming);

    case Command::Kind::kCaptureCoronal:
      if (phase_ != Phase::kStreaming || coronal_accepted()) throw illegal();
      CaptureLatest(View::kCoronal);
      return MoveTo(Phase::kCoronalReview);

    case Command::Kind::kCaptureTransverse:
      if (phase_ != Phase::kStreaming || !coronal_accepted()) throw illegal();
      CaptureLatest(View::kTransverse);
      return MoveTo(Phase::kTransverseReview);

    case Command::Kind::kAdjustBox: {
      if (!reviewing) throw illegal();
      const auto box = geometry::BoxFromCorners<double>(command.corners);
      if (!(box.extent_minor > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "corners span no area");
      }
      capture_->box = box;
      capture_->source = MeasurementSource::kRefined;
      return std::nullopt;
    }

    case Command::Kind::kRecompute: {
      if (!reviewing) throw illegal();
      geometry::MaskMeasurement m;
      try {
        m = geometry::MeasureMask(capture_->pair.mask, ReviewView());
      } catch (const Error& e) {
        throw Error(ErrorCode::kMeasurementFailed, e.what());
      }
      capture_->box = m.box;
      capture_->source = MeasurementSource::kAutomatic;
      return std::nullopt;
    }

    case Command::Kind::kAcceptMeasurement: {
      if (!reviewing) throw illegal();
      const auto dims = geometry::ExtractDimensions(
          capture_->box, ReviewView(), capture_->pair.mask.pixel_spacing);
      auto next = measurement_;
      if (capture_->source == MeasurementSource::kRefined) {
        next.source = MeasurementSource::kRefined;
      }
      if (phase_ == Phase::kCoronalReview) {
        next.length_mm = dims.length_mm;
        measurement_ = next;
        capture_.reset();
        return MoveTo(Phase::kStreaming);
      }
      next.width_mm = dims.width_mm;
      next.thickness_mm = dims.thickness_mm;
      next.volume_mm3 =
          geometry::EllipsoidVolume(*next.length_mm, *next.width_mm, *next.thickness_mm);
      measurement_ = next;
      ++volume_computations_;
      capture_.reset();
      return MoveTo(Phase::kComplete);
    }
  }
  throw illegal();
}

std::string Session::Describe() const {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  out << "phase=" << ToString(phase_);
  if (capture_) {
    out << " frame_id=" << capture_->pair.frame_id << " box=";
    for (int i = 0; i < 4; ++i) {
      out << (i ? "," : "") << num(capture_->box.corners[i].x()) << ","
          << num(capture_->box.corners[i].y());
    }
    const double s = capture_->pair.mask.pixel_spacing;
    out << " box_major_mm=" << num(capture_->box.extent_major * s)
        << " box_minor_mm=" << num(capture_->box.extent_minor * s) << " box_source="
        << (capture_->source == MeasurementSource::kRefined ? "refined" : "automatic");
  }
  if (measurement_.length_mm) out << " length_mm=" << num(*measurement_.length_mm);
  if (measurement_.width_mm) out << " width_mm=" << num(*measurement_.width_mm);
  if (measurement_.thickness_mm) {
    out << " thickness_mm=" << num(*measurement_.thickness_mm);
  }
  if (measurement_.volume_mm3) out << " volume_mm3=" << num(*measurement_.volume_mm3);
  if (measurement_.length_mm) {
    out << " source="
        << (measurement_.source == MeasurementSource::kRefined ? "refined" : "automatic");
  }
  return out.str();
}

}  // namespace usar::server
