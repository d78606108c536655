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

#include "usar/geometry.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "support/oracles.hpp"

namespace usar::geometry {
namespace {

using testing::AxisDifferenceDeg;
using testing::RasterizeEllipse;
using testing::RasterizeRectangle;
using testing::RasterPoint;
using testing::ToPixelSet;

constexpr double kPi = std::numbers::pi;

PixelSet Points(std::initializer_list<std::pair<int, int>> pts) {
  PixelSet p(2, static_cast<Eigen::Index>(pts.size()));
  Eigen::Index i = 0;
  for (const auto& [x, y] : pts) {
    p(0, i) = x;
    p(1, i) = y;
    ++i;
  }
  return p;
}

double Deg(double rad) { return rad * 180.0 / kPi; }

TEST(SelectRegionTest, AllBackgroundIsEmptyRegion) {
  Mask m(4, 4);
  try {
    SelectRegion(m, ClassSelector::kUnion);
    FAIL() << "expected EmptyRegion";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyRegion);
  }
}

TEST(SelectRegionTest, FullGridRowMajor) {
  Mask m(2, 2);
  std::fill(m.labels.begin(), m.labels.end(), 1);
  const PixelSet p = SelectRegion(m, ClassSelector::kCortex);
  ASSERT_EQ(p.cols(), 4);
  EXPECT_EQ(p, Points({{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
}

TEST(SelectRegionTest, UnionCountsBothClasses) {
  Mask m(5, 5);
  m.at(0, 0) = 1;
  m.at(2, 1) = 1;
  m.at(4, 4) = 1;
  m.at(1, 3) = 2;
  m.at(3, 3) = 2;
  EXPECT_EQ(SelectRegion(m, ClassSelector::kUnion).cols(), 5);
  EXPECT_EQ(SelectRegion(m, ClassSelector::kCortex).cols(), 3);
  EXPECT_EQ(SelectRegion(m, ClassSelector::kCentralComplex).cols(), 2);
}

TEST(SelectRegionTest, RejectsInvalidLabel) {
  Mask m(2, 2);
  m.at(1, 1) = 7;
  EXPECT_THROW(SelectRegion(m, ClassSelector::kUnion), Error);
}

TEST(LargestComponentTest, ConnectedInputIsIdentity) {
  std::vector<RasterPoint> blob;
  for (int x = 0; x < 5; ++x) {
    blob.push_back({x, 0});
    blob.push_back({x, 1});
  }
  std::sort(blob.begin(), blob.end(), [](auto a, auto b) {
    return std::tie(a.y, a.x) < std::tie(b.y, b.x);
  });
  const PixelSet in = ToPixelSet(blob);
  EXPECT_EQ(LargestComponent(in), in);
}

TEST(LargestComponentTest, KeepsBiggerBlob) {
  // 10-px blob (5x2) and a 3-px diagonal blob; diagonal steps are
  // 8-connected.
  std::vector<RasterPoint> pts;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 5; ++x) pts.push_back({x + 10, y + 10});
  pts.push_back({1, 1});
  pts.push_back({2, 2});
  pts.push_back({3, 3});

  const auto comps = testing::FloodFillComponents(pts, 32, 32);
  ASSERT_EQ(comps.size(), 2u);
  const auto& expected = comps[0].size() > comps[1].size() ? comps[0] : comps[1];
  ASSERT_EQ(expected.size(), 10u);

  const PixelSet got = LargestComponent(ToPixelSet(pts));
  ASSERT_EQ(got.cols(), 10);
  for (Eigen::Index i = 0; i < got.cols(); ++i) {
    EXPECT_GE(got(0, i), 10);
    EXPECT_GE(got(1, i), 10);
  }
}

TEST(LargestComponentTest, TieGoesToTopLeft) {
  std::vector<RasterPoint> pts;
  // Both blobs are 5 px; the second starts on an earlier row.
  for (int x = 0; x < 5; ++x) pts.push_back({x + 20, 8});
  for (int x = 0; x < 5; ++x) pts.push_back({x, 3});
  const auto comps = testing::FloodFillComponents(pts, 32, 32);
  ASSERT_EQ(comps.size(), 2u);
  ASSERT_EQ(comps[0].size(), comps[1].size());
  // Discovery order of a row-major flood fill puts the top-left blob first.
  EXPECT_EQ(comps[0].front().y, 3);

  const PixelSet got = LargestComponent(ToPixelSet(pts));
  ASSERT_EQ(got.cols(), 5);
  for (Eigen::Index i = 0; i < got.cols(); ++i) EXPECT_EQ(got(1, i), 3);
}

TEST(LargestComponentTest, TieOnSameRowUsesMinX) {
  std::vector<RasterPoint> pts;
  for (int y = 0; y < 3; ++y) pts.push_back({9, y});
  for (int y = 0; y < 3; ++y) pts.push_back({2, y});
  const PixelSet got = LargestComponent(ToPixelSet(pts));
  for (Eigen::Index i = 0; i < got.cols(); ++i) EXPECT_EQ(got(0, i), 2);
}

TEST(CentroidTest, Examples) {
  EXPECT_EQ(Centroid(Points({{3, 7}})), Eigen::Vector2d(3.0, 7.0));
  EXPECT_EQ(Centroid(Points({{0, 0}, {1, 0}, {0, 1}, {1, 1}})),
            Eigen::Vector2d(0.5, 0.5));
  const Eigen::Vector2d c = Centroid(Points({{0, 0}, {1, 0}, {0, 1}}));
  EXPECT_NEAR(c.x(), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.y(), 1.0 / 3.0, 1e-15);
}

TEST(CentroidTest, EmptyThrows) {
  EXPECT_THROW(Centroid(PixelSet(2, 0)), Error);
  EXPECT_THROW(Scatter(PixelSet(2, 0)), Error);
  EXPECT_THROW(OrientedBoundingBox(PixelSet(2, 0)), Error);
}

TEST(ScatterTest, Examples) {
  const auto single = Scatter(Points({{4, 9}}));
  EXPECT_EQ(single.sxx, 0.0);
  EXPECT_EQ(single.syy, 0.0);
  EXPECT_EQ(single.sxy, 0.0);

  const auto line = Scatter(Points({{0, 0}, {1, 0}, {2, 0}}));
  EXPECT_DOUBLE_EQ(line.sxx, 2.0);
  EXPECT_EQ(line.syy, 0.0);
  EXPECT_EQ(line.sxy, 0.0);

  const auto cross =
      Scatter(Points({{5, 5}, {4, 5}, {6, 5}, {5, 4}, {5, 6}, {3, 5}, {7, 5}}));
  EXPECT_EQ(cross.sxy, 0.0);
  EXPECT_GT(cross.sxx, cross.syy);
}

TEST(ScatterTest, MatchesDirectSummation) {
  const PixelSet p = Points({{1, 2}, {4, 3}, {2, 7}, {6, 6}, {3, 1}});
  double mx = 0, my = 0;
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    mx += p(0, i);
    my += p(1, i);
  }
  mx /= 5;
  my /= 5;
  double sxx = 0, syy = 0, sxy = 0;
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    sxx += (p(0, i) - mx) * (p(0, i) - mx);
    syy += (p(1, i) - my) * (p(1, i) - my);
    sxy += (p(0, i) - mx) * (p(1, i) - my);
  }
  const auto s = Scatter(p);
  EXPECT_NEAR(s.sxx, sxx, 1e-12);
  EXPECT_NEAR(s.syy, syy, 1e-12);
  EXPECT_NEAR(s.sxy, sxy, 1e-12);
  EXPECT_NEAR(s.centroid.x(), mx, 1e-12);
  EXPECT_NEAR(s.centroid.y(), my, 1e-12);
}

TEST(ScatterTest, CauchySchwarzOnRandomSets) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> coord(-300, 300);
  std::uniform_int_distribution<int> size(1, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    PixelSet p(2, size(rng));
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      p(0, i) = coord(rng);
      p(1, i) = coord(rng);
    }
    const auto s = Scatter(p);
    ASSERT_GE(s.sxx, 0.0);
    ASSERT_GE(s.syy, 0.0);
    ASSERT_LE(s.sxy * s.sxy, s.sxx * s.syy) << "trial " << trial;
  }
}

TEST(PrincipalOrientationTest, Examples) {
  Scatter2<double> s;
  s.sxx = 5;
  s.syy = 1;
  s.sxy = 0;
  EXPECT_EQ(PrincipalOrientation(s), 0.0);

  s.sxx = 3;
  s.syy = 3;
  s.sxy = 2;
  EXPECT_NEAR(PrincipalOrientation(s), kPi / 4, 1e-15);

  s.sxy = 0;
  EXPECT_EQ(PrincipalOrientation(s), 0.0);

  // Vertical structure lands on +pi/2, never -pi/2.
  s.sxx = 1;
  s.syy = 5;
  s.sxy = 0;
  EXPECT_NEAR(PrincipalOrientation(s), kPi / 2, 1e-15);
  s.sxy = -0.0;
  EXPECT_GT(PrincipalOrientation(s), 0.0);
}

TEST(OrientedBoxTest, AxisAlignedRectangle) {
  std::vector<RasterPoint> pts;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 10; ++x) pts.push_back({x + 3, y + 5});
  const auto box = OrientedBoundingBox(ToPixelSet(pts));
  EXPECT_EQ(box.theta, 0.0);
  EXPECT_DOUBLE_EQ(box.extent_major, 10.0);
  EXPECT_DOUBLE_EQ(box.extent_minor, 4.0);
  EXPECT_NEAR(box.center.x(), 7.5, 1e-12);
  EXPECT_NEAR(box.center.y(), 6.5, 1e-12);
  EXPECT_NEAR(box.corners[0].x(), 2.5, 1e-12);
  EXPECT_NEAR(box.corners[0].y(), 4.5, 1e-12);
  EXPECT_NEAR(box.corners[2].x(), 12.5, 1e-12);
  EXPECT_NEAR(box.corners[2].y(), 8.5, 1e-12);
}

TEST(OrientedBoxTest, RotatedRectangleAgreesWithOracle) {
  const double theta = 30.0 * kPi / 180.0;
  const auto pts = RasterizeRectangle(50.3, 40.7, 10.0, 4.0, theta);
  const auto oracle = testing::MinAreaRectangle(pts);
  const auto box = OrientedBoundingBox(ToPixelSet(pts));
  EXPECT_LT(AxisDifferenceDeg(box.theta, theta), 2.0);
  EXPECT_NEAR(box.extent_major, 10.0, 2.0);
  EXPECT_NEAR(box.extent_minor, 4.0, 2.0);
  EXPECT_NEAR(box.extent_major, oracle.extent_major, 2.0);
  EXPECT_NEAR(box.extent_minor, oracle.extent_minor, 2.0);
}

TEST(OrientedBoxTest, SinglePixel) {
  const auto box = OrientedBoundingBox(Points({{12, 30}}));
  EXPECT_EQ(box.theta, 0.0);
  EXPECT_EQ(box.extent_major, 1.0);
  EXPECT_EQ(box.extent_minor, 1.0);
  EXPECT_EQ(box.center, Eigen::Vector2d(12, 30));
}

TEST(OrientedBoxTest, CornersReproducibleFromCenterThetaExtents) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ang(-kPi / 2, kPi / 2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = RasterizeEllipse(100.5, 90.2, 40, 15, ang(rng));
    const auto box = OrientedBoundingBox(ToPixelSet(pts));
    const Eigen::Matrix2d r = Rotation(box.theta);
    const double hu = box.extent_u / 2;
    const double hv = box.extent_v / 2;
    const std::array<Eigen::Vector2d, 4> expected = {
        box.center + r * Eigen::Vector2d(-hu, -hv),
        box.center + r * Eigen::Vector2d(hu, -hv),
        box.center + r * Eigen::Vector2d(hu, hv),
        box.center + r * Eigen::Vector2d(-hu, hv)};
    for (int k = 0; k < 4; ++k) {
      EXPECT_LT((box.corners[k] - expected[k]).norm(), 1e-6);
    }
    EXPECT_GE(box.extent_major, box.extent_minor);
    EXPECT_GT(box.theta, -kPi / 2);
    EXPECT_LE(box.theta, kPi / 2);
  }
}

TEST(OrientedBoxTest, ContainsEveryPixelCenter) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> coord(0, 200);
  for (int trial = 0; trial < 200; ++trial) {
    PixelSet p(2, 25);
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      p(0, i) = coord(rng);
      p(1, i) = coord(rng);
    }
    const auto box = OrientedBoundingBox(p);
    const Eigen::Vector2d pivot = Centroid(p);
    const Eigen::Matrix2d rt = Rotation(box.theta).transpose();
    // Footprint corners in the box frame bound every rotated center.
    const Eigen::Vector2d lo = rt * (box.corners[0] - pivot);
    const Eigen::Vector2d hi = rt * (box.corners[2] - pivot);
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      const Eigen::Vector2d q = rt * (p.col(i).cast<double>() - pivot);
      ASSERT_GE(q.x(), lo.x() + 0.5 - 1e-9);
      ASSERT_LE(q.x(), hi.x() - 0.5 + 1e-9);
      ASSERT_GE(q.y(), lo.y() + 0.5 - 1e-9);
      ASSERT_LE(q.y(), hi.y() - 0.5 + 1e-9);
    }
  }
}

TEST(OrientedBoxTest, TranslationInvariance) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ang(-kPi / 2, kPi / 2);
  std::uniform_int_distribution<int> shift(-400, 400);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pts = RasterizeEllipse(60.3, 70.9, 35, 12, ang(rng));
    PixelSet p = ToPixelSet(pts);
    const Eigen::Vector2i d(shift(rng), shift(rng));
    PixelSet q = p.colwise() + d;
    const auto a = OrientedBoundingBox(p);
    const auto b = OrientedBoundingBox(q);
    EXPECT_EQ(a.theta, b.theta);
    EXPECT_EQ(a.extent_u, b.extent_u);
    EXPECT_EQ(a.extent_v, b.extent_v);
    EXPECT_EQ(a.extent_major, b.extent_major);
    EXPECT_EQ(a.extent_minor, b.extent_minor);
    EXPECT_NEAR(b.center.x() - a.center.x(), d.x(), 1e-9);
    EXPECT_NEAR(b.center.y() - a.center.y(), d.y(), 1e-9);
  }
}

TEST(OrientedBoxTest, RotationEquivariance) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> ang(-kPi / 2, kPi / 2);
  std::uniform_real_distribution<double> axis(20, 120);
  for (int trial = 0; trial < 60; ++trial) {
    double a = axis(rng);
    double b = axis(rng);
    if (a < b) std::swap(a, b);
    if (a < 1.3 * b) a = 1.3 * b;  // orientation is undefined for circles
    const double base = ang(rng);
    const double phi = ang(rng);
    const auto b0 = OrientedBoundingBox(
        ToPixelSet(RasterizeEllipse(200.25, 200.75, a, b, base)));
    const auto b1 = OrientedBoundingBox(
        ToPixelSet(RasterizeEllipse(200.25, 200.75, a, b, base + phi)));
    EXPECT_LT(AxisDifferenceDeg(b1.theta - b0.theta, phi), 2.0);
    EXPECT_LT(std::abs(b1.extent_major - b0.extent_major) / b0.extent_major,
              0.03);
    EXPECT_LT(std::abs(b1.extent_minor - b0.extent_minor) / b0.extent_minor,
              0.03);
  }
}

TEST(OrientedBoxTest, EllipseAnalyticExtents) {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> ang(-kPi / 2, kPi / 2);
  std::uniform_real_distribution<double> axis(10, 150);
  std::uniform_real_distribution<double> frac(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    double a = axis(rng);
    double b = axis(rng);
    if (a < b) std::swap(a, b);
    if (a < 1.3 * b) a = 1.3 * b;
    const double theta = ang(rng);
    const auto box = OrientedBoundingBox(ToPixelSet(
        RasterizeEllipse(300 + frac(rng), 300 + frac(rng), a, b, theta)));
    EXPECT_LT(AxisDifferenceDeg(box.theta, theta), 2.0)
        << "a=" << a << " b=" << b << " theta=" << Deg(theta);
    EXPECT_NEAR(box.extent_major, 2 * a + 1, 3.0);
    EXPECT_NEAR(box.extent_minor, 2 * b + 1, 3.0);
  }
}

TEST(BoxFromCornersTest, RoundTripsOrientedBox) {
  const auto box = OrientedBoundingBox(
      ToPixelSet(RasterizeEllipse(80.4, 60.1, 50, 20, 0.7)));
  const auto again = BoxFromCorners(box.corners);
  EXPECT_NEAR(again.theta, box.theta, 1e-12);
  EXPECT_NEAR(again.extent_major, box.extent_major, 1e-9);
  EXPECT_NEAR(again.extent_minor, box.extent_minor, 1e-9);
  EXPECT_LT((again.center - box.center).norm(), 1e-9);
  for (int k = 0; k < 4; ++k) {
    EXPECT_LT((again.corners[k] - box.corners[k]).norm(), 1e-9);
  }
}

TEST(BoxFromCornersTest, DraggingOneCornerAlongMajorAxis) {
  const auto box = OrientedBoundingBox(
      ToPixelSet(RasterizeEllipse(80.4, 60.1, 50, 20, -0.4)));
  ASSERT_GT(box.extent_u, box.extent_v);
  auto corners = box.corners;
  const Eigen::Vector2d u(std::cos(box.theta), std::sin(box.theta));
  corners[1] += 10.0 * u;
  const auto dragged = BoxFromCorners(corners);
  EXPECT_NEAR(dragged.extent_major, box.extent_major + 10.0, 1e-9);
  EXPECT_NEAR(dragged.extent_minor, box.extent_minor, 1e-9);
  EXPECT_NEAR(dragged.theta, box.theta, 1e-12);
  const auto m = ExtractDimensions(dragged, View::kCoronal, 0.5);
  const auto m0 = ExtractDimensions(box, View::kCoronal, 0.5);
  EXPECT_NEAR(*m.length_mm - *m0.length_mm, 5.0, 1e-9);
}

TEST(BoxFromCornersTest, DegenerateThrows) {
  std::array<Eigen::Vector2d, 4> c;
  c.fill(Eigen::Vector2d(1, 1));
  EXPECT_THROW(BoxFromCorners(c), Error);
}

TEST(ExtractDimensionsTest, Examples) {
  OrientedBox<double> box;
  box.extent_major = 100;
  box.extent_minor = 40;
  const auto coronal = ExtractDimensions(box, View::kCoronal, 0.5);
  EXPECT_DOUBLE_EQ(*coronal.length_mm, 50.0);
  EXPECT_FALSE(coronal.width_mm);
  EXPECT_FALSE(coronal.thickness_mm);

  const auto transverse = ExtractDimensions(box, View::kTransverse, 0.5);
  EXPECT_FALSE(transverse.length_mm);
  EXPECT_DOUBLE_EQ(*transverse.width_mm, 50.0);
  EXPECT_DOUBLE_EQ(*transverse.thickness_mm, 20.0);

  box.extent_major = box.extent_minor = 10;
  const auto square = ExtractDimensions(box, View::kTransverse, 1.0);
  EXPECT_EQ(*square.width_mm, 10.0);
  EXPECT_EQ(*square.thickness_mm, 10.0);

  EXPECT_THROW(ExtractDimensions(box, View::kCoronal, 0.0), Error);
}

TEST(EllipsoidVolumeTest, Examples) {
  EXPECT_NEAR(EllipsoidVolume(2.0, 2.0, 2.0), 4.0 * kPi / 3.0, 1e-12);
  EXPECT_NEAR(EllipsoidVolume(1.0, 1.0, 1.0), 0.523599, 1e-6);
  EXPECT_NEAR(EllipsoidVolume(110.0, 50.0, 40.0), 115191.73, 1e-2);
}

TEST(EllipsoidVolumeTest, NonPositiveThrows) {
  for (const auto& [l, w, t] : {std::tuple{0.0, 1.0, 1.0},
                                std::tuple{1.0, -2.0, 1.0},
                                std::tuple{1.0, 1.0, std::nan("")}}) {
    try {
      EllipsoidVolume(l, w, t);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNonPositiveDimension);
    }
  }
}

TEST(EllipsoidVolumeTest, PermutationSymmetricExactly) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(0.1, 300.0);
  for (int i = 0; i < 2000; ++i) {
    const double l = d(rng), w = d(rng), t = d(rng);
    const double v = EllipsoidVolume(l, w, t);
    EXPECT_EQ(v, EllipsoidVolume(l, t, w));
    EXPECT_EQ(v, EllipsoidVolume(w, l, t));
    EXPECT_EQ(v, EllipsoidVolume(w, t, l));
    EXPECT_EQ(v, EllipsoidVolume(t, l, w));
    EXPECT_EQ(v, EllipsoidVolume(t, w, l));
  }
}

TEST(MeasureMaskTest, UsesLargestComponentOfUnion) {
  Mask m(64, 64, 0.5);
  for (int y = 10; y < 14; ++y)
    for (int x = 5; x < 45; ++x) m.at(x, y) = (x < 25) ? 1 : 2;
  m.at(60, 60) = 1;  // speck
  const auto r = MeasureMask(m, View::kCoronal);
  EXPECT_EQ(r.pixel_count, 160);
  EXPECT_DOUBLE_EQ(*r.measurement.length_mm, 20.0);
}

TEST(FloatScalarTest, TemplatedPathCompiles) {
  const auto box = OrientedBoundingBox<float>(
      ToPixelSet(RasterizeEllipse(40.5, 40.5, 30, 10, 0.3)));
  EXPECT_NEAR(box.theta, 0.3f, 0.03f);
}

}  // namespace
}  // namespace usar::geometry
