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

#include "usar/sources.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "usar/error.hpp"
#include "usar/pgm.hpp"

namespace usar::providers {
namespace {

namespace fs = std::filesystem;
using geometry::ClassSelector;
using geometry::View;

constexpr double kPi = std::numbers::pi;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("usar_src_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<testing::RasterPoint> Foreground(const Mask& m) {
  std::vector<testing::RasterPoint> pts;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(x, y) != 0) pts.push_back({x, y});
  return pts;
}

TEST(PhantomTest, SameSpecAndFrameAreBitIdentical) {
  PhantomSpec spec;
  spec.seed = 42;
  const auto a = PhantomNext(spec, 17);
  const auto b = PhantomNext(spec, 17);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  const auto c = PhantomNext(spec, 18);
  EXPECT_NE(a.image, c.image);
}

TEST(PhantomTest, NoiselessAxisAlignedExtents) {
  PhantomSpec spec;
  spec.noise = 0.0;
  spec.theta = 0.0;
  spec.semi_major = 120.0;
  spec.semi_minor = 60.0;
  const auto f = PhantomNext(spec, 0);
  const auto box = geometry::OrientedBoundingBox<double>(
      geometry::SelectRegion(f.mask, ClassSelector::kUnion));
  EXPECT_NEAR(box.extent_major, 2 * spec.semi_major + 1, 2.0);
  EXPECT_NEAR(box.extent_minor, 2 * spec.semi_minor + 1, 2.0);
}

TEST(PhantomTest, LabelsNestCentralComplexInsideCortex) {
  PhantomSpec spec;
  const auto f = PhantomNext(spec, 3);
  long cortex = 0;
  long central = 0;
  for (auto l : f.mask.labels) {
    cortex += l == 1;
    central += l == 2;
    ASSERT_LE(l, 2);
  }
  EXPECT_GT(cortex, 0);
  EXPECT_GT(central, 0);
  // Center pixel belongs to the central complex.
  EXPECT_EQ(f.mask.at(static_cast<int>(std::lround(f.center.x())),
                      static_cast<int>(std::lround(f.center.y()))),
            2);
}

TEST(PhantomTest, SevereArtifactSplitsTheKidney) {
  PhantomSpec spec;
  spec.noise = 0.0;
  const auto clean = PhantomNext(spec, 0);
  spec.artifact = ArtifactMode::kSevere;
  const auto shadowed = PhantomNext(spec, 0);

  const auto full = Foreground(clean.mask);
  const auto pts = Foreground(shadowed.mask);
  const auto comps = testing::FloodFillComponents(pts, spec.width, spec.height);
  EXPECT_GE(comps.size(), 2u);
  const auto largest = geometry::LargestComponent(
      geometry::SelectRegion(shadowed.mask, ClassSelector::kUnion));
  EXPECT_LT(largest.cols(), static_cast<Eigen::Index>(full.size()));
}

TEST(PhantomTest, MildArtifactClipsOnlyTheTip) {
  PhantomSpec spec;
  spec.noise = 0.0;
  const auto clean = Foreground(PhantomNext(spec, 0).mask);
  spec.artifact = ArtifactMode::kMild;
  const auto mild = Foreground(PhantomNext(spec, 0).mask);
  EXPECT_LT(mild.size(), clean.size());
  EXPECT_GT(mild.size(), clean.size() * 9 / 10);
}

TEST(PhantomTest, OracleClosureOverRandomShapes) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    PhantomSpec spec;
    spec.semi_major = 25.0 + 175.0 * unit(rng);
    // Keep a visible aspect; an orientation is meaningless for a disc.
    spec.semi_minor = 20.0 + (0.8 * spec.semi_major - 20.0) * unit(rng);
    spec.theta = kPi * (unit(rng) - 0.5);
    spec.seed = i;
    const auto f = PhantomNext(spec, static_cast<std::uint64_t>(i));
    const auto m = geometry::MeasureMask(f.mask, View::kTransverse);
    EXPECT_LT(testing::AxisDifferenceDeg(m.box.theta, spec.theta), 2.0)
        << "a=" << spec.semi_major << " b=" << spec.semi_minor;
    EXPECT_NEAR(m.box.extent_major, 2 * spec.semi_major + 1, 3.0);
    EXPECT_NEAR(m.box.extent_minor, 2 * spec.semi_minor + 1, 3.0);
  }
}

TEST(PhantomTest, InvalidSpecsAreRejected) {
  PhantomSpec spec;
  spec.semi_minor = spec.semi_major + 1;
  EXPECT_THROW(spec.Validate(), Error);
  spec = {};
  spec.inner_scale = 1.0;
  EXPECT_THROW(spec.Validate(), Error);
  spec = {};
  spec.semi_major = 300;
  EXPECT_THROW(spec.Validate(), Error);
}

TEST(PhantomSourceTest, YieldsFramesInOrderUpToLimit) {
  PhantomSpec spec;
  spec.width = spec.height = 128;
  spec.semi_major = 40;
  spec.semi_minor = 20;
  PhantomSource src(spec, 3);
  for (std::uint32_t i = 0; i < 3; ++i) {
    auto f = src.Next();
    ASSERT_TRUE(f);
    EXPECT_EQ(f->index, i);
    EXPECT_EQ(f->image, PhantomNext(spec, i).image);
    ASSERT_TRUE(f->ground_truth);
  }
  EXPECT_FALSE(src.Next());
}

void WriteRaw(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

TEST(ReplayTest, ImageWithMaskIsOnePair) {
  TempDir dir;
  GrayImage img(8, 6, 100);
  Mask mask(8, 6);
  mask.at(2, 2) = 1;
  mask.at(3, 2) = 2;
  io::WritePgm(dir.path() / "frame0001.pgm", img);
  io::WriteMaskPgm(dir.path() / "frame0001.mask.pgm", mask);
  const auto frames = LoadReplay(dir.path());
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].name, "frame0001");
  EXPECT_EQ(frames[0].image, img);
  ASSERT_TRUE(frames[0].ground_truth);
  EXPECT_EQ(frames[0].ground_truth->labels, mask.labels);
}

TEST(ReplayTest, MaskSizeMismatchIsDimensionMismatch) {
  TempDir dir;
  io::WritePgm(dir.path() / "a.pgm", GrayImage(512, 512));
  io::WriteMaskPgm(dir.path() / "a.mask.pgm", Mask(256, 256));
  try {
    LoadReplay(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(ReplayTest, EmptyDirectoryIsEmptyStream) {
  TempDir dir;
  ReplaySource src(dir.path());
  EXPECT_EQ(src.size(), 0u);
  EXPECT_FALSE(src.Next());
}

TEST(ReplayTest, MissingDirectory) {
  try {
    ReplaySource src("/nonexistent/usar/replay");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingDirectory);
  }
}

TEST(ReplayTest, MalformedFileNamesTheFile) {
  TempDir dir;
  WriteRaw(dir.path() / "bad.pgm", "P2\n2 2\n255\n0 0 0 0\n");
  try {
    LoadReplay(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedFile);
    EXPECT_NE(std::string(e.what()).find("bad.pgm"), std::string::npos);
  }
}

TEST(ReplayTest, MaskValuesOutsideLabelSetAreMalformed) {
  TempDir dir;
  io::WritePgm(dir.path() / "a.pgm", GrayImage(4, 4));
  GrayImage bad(4, 4);
  bad.pixels[5] = 3;
  io::WritePgm(dir.path() / "a.mask.pgm", bad);
  try {
    LoadReplay(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedFile);
    EXPECT_NE(std::string(e.what()).find("a.mask.pgm"), std::string::npos);
  }
}

TEST(ReplayTest, TruncatedRasterIsMalformed) {
  TempDir dir;
  WriteRaw(dir.path() / "t.pgm", "P5\n4 4\n255\n" + std::string(10, '\0'));
  EXPECT_THROW(LoadReplay(dir.path()), Error);
}

TEST(ReplayTest, HeaderCommentsAreSkipped) {
  TempDir dir;
  WriteRaw(dir.path() / "c.pgm", "P5\n# probe A\n2 1\n# max\n255\n\x05\x07");
  const auto frames = LoadReplay(dir.path());
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].image.pixels, (std::vector<std::uint8_t>{5, 7}));
  EXPECT_FALSE(frames[0].ground_truth);
}

TEST(ReplayTest, OrderIsLexicographicAndMetaIsApplied) {
  TempDir dir;
  for (const char* stem : {"b", "a10", "a2"}) {
    io::WritePgm(dir.path() / (std::string(stem) + ".pgm"), GrayImage(2, 2));
  }
  WriteRaw(dir.path() / "a2.meta",
           "# site notes\npixel_spacing_mm = 0.25\nview=transverse\nprobe=C1-5\n");
  const auto frames = LoadReplay(dir.path(), 0.7);
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_EQ(frames[0].name, "a10");
  EXPECT_EQ(frames[1].name, "a2");
  EXPECT_EQ(frames[2].name, "b");
  EXPECT_DOUBLE_EQ(frames[0].pixel_spacing, 0.7);
  EXPECT_DOUBLE_EQ(frames[1].pixel_spacing, 0.25);
  EXPECT_EQ(frames[1].view, View::kTransverse);
}

TEST(ReplayTest, OrphanMaskIsMalformed) {
  TempDir dir;
  io::WriteMaskPgm(dir.path() / "x.mask.pgm", Mask(2, 2));
  EXPECT_THROW(ReplaySource src(dir.path()), Error);
}

TEST(ReplayTest, PhantomDatasetRoundTrips) {
  TempDir dir;
  const auto frames = MakePhantomDataset(2, 2, 5);
  WriteReplay(dir.path(), frames);
  const auto back = LoadReplay(dir.path());
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(back[i].name, frames[i].name);
    EXPECT_EQ(back[i].image, frames[i].image);
    EXPECT_EQ(back[i].ground_truth->labels, frames[i].ground_truth->labels);
    EXPECT_EQ(back[i].view, frames[i].view);
    EXPECT_EQ(back[i].reference.length_mm, frames[i].reference.length_mm);
    EXPECT_EQ(back[i].reference.width_mm, frames[i].reference.width_mm);
    EXPECT_EQ(back[i].reference.thickness_mm, frames[i].reference.thickness_mm);
  }
}

}  // namespace
}  // namespace usar::providers
