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
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "support/oracles.hpp"

namespace usar::server {
namespace {

using geometry::View;

protocol::AlignedPair EllipsePair(std::uint32_t id, int size, double a, double b,
                                  double theta, double spacing) {
  protocol::AlignedPair p;
  p.frame_id = id;
  p.image = GrayImage(size, size, 50);
  p.mask = Mask(size, size, spacing);
  for (const auto& pt :
       testing::RasterizeEllipse(size / 2.0, size / 2.0, a, b, theta)) {
    p.mask.at(pt.x, pt.y) = 1;
  }
  return p;
}

Command Cmd(std::string_view text) { return Command::Parse(text); }

ErrorCode CodeOf(Session& s, std::string_view text) {
  try {
    s.Handle(Cmd(text));
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << text << " did not throw";
  return ErrorCode::kInvalidArgument;
}

TEST(CommandTest, ParsesNamesAndCorners) {
  EXPECT_EQ(Cmd("capture_coronal").kind, Command::Kind::kCaptureCoronal);
  EXPECT_EQ(Cmd("  reset ").kind, Command::Kind::kReset);
  const auto c = Cmd("adjust_box 1 2 3.5 4 5 6 7 -8");
  EXPECT_EQ(c.kind, Command::Kind::kAdjustBox);
  EXPECT_DOUBLE_EQ(c.corners[1].x(), 3.5);
  EXPECT_DOUBLE_EQ(c.corners[3].y(), -8.0);
}

TEST(CommandTest, RejectsMalformedInput) {
  auto code = [](std::string_view t) {
    try {
      Command::Parse(t);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kEmptyRegion;  // sentinel: no throw
  };
  EXPECT_EQ(code("measure"), ErrorCode::kUnknownCommand);
  EXPECT_EQ(code(""), ErrorCode::kUnknownCommand);
  EXPECT_EQ(code("adjust_box 1 2 3"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code("adjust_box 1 2 3 4 5 6 7 x"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code("adjust_box 1 2 3 4 5 6 7 nan"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code("reset now"), ErrorCode::kInvalidArgument);
}

TEST(SessionTest, CaptureTransverseWhileIdleIsIllegal) {
  Session s;
  EXPECT_EQ(CodeOf(s, "capture_transverse"), ErrorCode::kIllegalTransition);
  EXPECT_EQ(s.phase(), Phase::kIdle);
}

TEST(SessionTest, CaptureWithoutFrameIsNoFrameAvailable) {
  Session s;
  s.Start();
  EXPECT_EQ(CodeOf(s, "capture_coronal"), ErrorCode::kNoFrameAvailable);
  EXPECT_EQ(s.phase(), Phase::kStreaming);
}

TEST(SessionTest, EmptyMaskIsMeasurementFailedAndStaysStreaming) {
  Session s;
  s.Start();
  protocol::AlignedPair p;
  p.image = GrayImage(8, 8);
  p.mask = Mask(8, 8);
  s.OnPair(p);
  EXPECT_EQ(CodeOf(s, "capture_coronal"), ErrorCode::kMeasurementFailed);
  EXPECT_EQ(s.phase(), Phase::kStreaming);
}

TEST(SessionTest, CaptureCoronalProposesGeometryBox) {
  Session s;
  s.Start();
  const auto pair = EllipsePair(7, 200, 70, 30, 0.4, 0.5);
  s.OnPair(pair);
  const auto t = s.Handle(Cmd("capture_coronal"));
  ASSERT_TRUE(t);
  EXPECT_EQ(t->from, Phase::kStreaming);
  EXPECT_EQ(t->to, Phase::kCoronalReview);
  const auto expected = geometry::OrientedBoundingBox<double>(geometry::LargestComponent(
      geometry::SelectRegion(pair.mask, geometry::ClassSelector::kUnion)));
  ASSERT_TRUE(s.capture());
  EXPECT_EQ(s.capture()->pair.frame_id, 7u);
  EXPECT_DOUBLE_EQ(s.capture()->box.theta, expected.theta);
  EXPECT_DOUBLE_EQ(s.capture()->box.extent_major, expected.extent_major);
  for (int i = 0; i < 4; ++i) {
    EXPECT_TRUE(s.capture()->box.corners[i].isApprox(expected.corners[i]));
  }
}

std::string CornersArg(const std::array<Eigen::Vector2d, 4>& c) {
  std::string out = "adjust_box";
  char buf[64];
  for (const auto& p : c) {
    std::snprintf(buf, sizeof(buf), " %.17g %.17g", p.x(), p.y());
    out += buf;
  }
  return out;
}

TEST(SessionTest, DraggingCornerTenPixelsAddsFiveMillimetres) {
  Session s;
  s.Start();
  s.OnPair(EllipsePair(1, 200, 70, 30, 0.4, 0.5));
  s.Handle(Cmd("capture_coronal"));
  const auto box = s.capture()->box;
  const double before = box.extent_major * 0.5;

  // Corner 1 sits at (u_max, v_min); push it 10 px further along the axis.
  auto corners = box.corners;
  const Eigen::Vector2d u(std::cos(box.theta), std::sin(box.theta));
  corners[1] += 10.0 * u;
  s.Handle(Cmd(CornersArg(corners)));
  EXPECT_EQ(s.capture()->source, geometry::MeasurementSource::kRefined);
  s.Handle(Cmd("accept_measurement"));
  ASSERT_TRUE(s.measurement().length_mm);
  EXPECT_NEAR(*s.measurement().length_mm - before, 5.0, 1e-9);
  EXPECT_EQ(s.measurement().source, geometry::MeasurementSource::kRefined);
}

TEST(SessionTest, RecomputeRestoresAutomaticBox) {
  Session s;
  s.Start();
  s.OnPair(EllipsePair(1, 120, 40, 20, 0.0, 1.0));
  s.Handle(Cmd("capture_coronal"));
  const auto original = s.capture()->box;
  s.Handle(Cmd("adjust_box 0 0 10 0 10 5 0 5"));
  s.Handle(Cmd("recompute"));
  EXPECT_EQ(s.capture()->source, geometry::MeasurementSource::kAutomatic);
  EXPECT_DOUBLE_EQ(s.capture()->box.extent_major, original.extent_major);
}

TEST(SessionTest, DegenerateCornersAreRejected) {
  Session s;
  s.Start();
  s.OnPair(EllipsePair(1, 120, 40, 20, 0.0, 1.0));
  s.Handle(Cmd("capture_coronal"));
  EXPECT_EQ(CodeOf(s, "adjust_box 0 0 10 0 20 0 30 0"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf(s, "adjust_box 1 1 1 1 1 1 1 1"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(s.capture()->source, geometry::MeasurementSource::kAutomatic);
}

TEST(SessionTest, FullWorkflowComputesVolumeOnce) {
  Session s;
  s.Start();
  s.OnPair(EllipsePair(1, 300, 110, 45, 0.2, 0.5));
  EXPECT_EQ(CodeOf(s, "capture_transverse"), ErrorCode::kIllegalTransition);
  s.Handle(Cmd("capture_coronal"));
  EXPECT_EQ(CodeOf(s, "capture_transverse"), ErrorCode::kIllegalTransition);
  s.Handle(Cmd("accept_measurement"));
  EXPECT_EQ(s.phase(), Phase::kStreaming);
  EXPECT_EQ(CodeOf(s, "capture_coronal"), ErrorCode::kIllegalTransition);

  s.OnPair(EllipsePair(2, 200, 60, 45, -0.3, 0.5));
  s.Handle(Cmd("capture_transverse"));
  EXPECT_EQ(s.phase(), Phase::kTransverseReview);
  const auto t = s.Handle(Cmd("accept_measurement"));
  ASSERT_TRUE(t);
  EXPECT_EQ(t->to, Phase::kComplete);
  const auto& m = s.measurement();
  ASSERT_TRUE(m.Complete());
  const double v = std::numbers::pi / 6.0 * *m.length_mm * *m.width_mm * *m.thickness_mm;
  EXPECT_NEAR(*m.volume_mm3, v, 1e-9 * v);
  EXPECT_EQ(s.volume_computations(), 1);
  EXPECT_NE(s.Describe().find("volume_mm3="), std::string::npos);

  EXPECT_EQ(CodeOf(s, "accept_measurement"), ErrorCode::kIllegalTransition);
  s.Handle(Cmd("reset"));
  EXPECT_EQ(s.phase(), Phase::kStreaming);
  EXPECT_FALSE(s.measurement().length_mm);
  EXPECT_FALSE(s.measurement().volume_mm3);
}

TEST(SessionTest, ResetFromIdleIsIllegal) {
  Session s;
  EXPECT_EQ(CodeOf(s, "reset"), ErrorCode::kIllegalTransition);
}

TEST(SessionTest, FuzzedSequencesNeverCompleteIllegally) {
  std::mt19937_64 rng(2024);
  const std::vector<protocol::AlignedPair> pairs = {
      EllipsePair(0, 48, 18, 8, 0.3, 0.5),
      EllipsePair(1, 48, 12, 10, -1.0, 0.7),
      [] {
        protocol::AlignedPair empty;
        empty.image = GrayImage(48, 48);
        empty.mask = Mask(48, 48);
        return empty;
      }(),
  };
  const char* names[] = {"capture_coronal", "capture_transverse", "adjust_box",
                         "accept_measurement", "recompute", "reset"};
  std::uniform_int_distribution<int> pick(0, 6);
  std::uniform_real_distribution<double> coord(-5, 60);

  for (int seq = 0; seq < 10000; ++seq) {
    Session s;
    int coronal_accepts = 0;
    int transverse_accepts = 0;
    int completions = 0;
    for (int step = 0; step < 16; ++step) {
      const int k = pick(rng);
      if (k == 6) {
        if (rng() % 2) {
          s.Start();
        } else {
          s.OnPair(pairs[rng() % pairs.size()]);
        }
        continue;
      }
      std::string text = names[k];
      if (k == 2) {
        for (int i = 0; i < 8; ++i) text += " " + std::to_string(coord(rng));
      }
      const Phase before = s.phase();
      try {
        s.Handle(Cmd(text));
      } catch (const Error&) {
        ASSERT_EQ(s.phase(), before);
        continue;
      }
      if (k == 5) {
        coronal_accepts = transverse_accepts = 0;
      } else if (k == 3 && before == Phase::kCoronalReview) {
        ++coronal_accepts;
      } else if (k == 3 && before == Phase::kTransverseReview) {
        ++transverse_accepts;
      }
      if (s.phase() == Phase::kComplete && before != Phase::kComplete) {
        ++completions;
        ASSERT_EQ(coronal_accepts, 1);
        ASSERT_EQ(transverse_accepts, 1);
        const auto& m = s.measurement();
        ASSERT_TRUE(m.Complete() && m.volume_mm3);
        const double v =
            std::numbers::pi / 6.0 * *m.length_mm * *m.width_mm * *m.thickness_mm;
        ASSERT_NEAR(*m.volume_mm3, v, 1e-9 * v);
      }
    }
    ASSERT_EQ(s.volume_computations(), completions);
  }
}

}  // namespace
}  // namespace usar::server
