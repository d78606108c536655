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

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "usar/error.hpp"
#include "usar/mask.hpp"

namespace usar::geometry {

// Pixel coordinates stored column-wise: row 0 is x, row 1 is y.
using PixelSet = Eigen::Matrix<int, 2, Eigen::Dynamic>;

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
using Rot2 = Eigen::Matrix<Scalar, 2, 2>;

enum class ClassSelector { kCortex, kCentralComplex, kUnion };
enum class View { kCoronal, kTransverse };
enum class MeasurementSource { kAutomatic, kRefined };

// Un-normalized second moments about the centroid.
template <typename Scalar = double>
struct Scatter2 {
  Scalar sxx{0};
  Scalar syy{0};
  Scalar sxy{0};
  Vec2<Scalar> centroid = Vec2<Scalar>::Zero();

  Eigen::Matrix<Scalar, 2, 2> Matrix() const {
    Eigen::Matrix<Scalar, 2, 2> c;
    c << sxx, sxy, sxy, syy;
    return c;
  }
};

// PCA-aligned rectangle. `extent_u` runs along `theta`, `extent_v` across it.
// Corners include the unit pixel footprint, ordered counter-clockwise in the
// box frame starting at (u_min, v_min).
template <typename Scalar = double>
struct OrientedBox {
  Vec2<Scalar> center = Vec2<Scalar>::Zero();
  Scalar theta{0};
  Scalar extent_u{0};
  Scalar extent_v{0};
  Scalar extent_major{0};
  Scalar extent_minor{0};
  std::array<Vec2<Scalar>, 4> corners{};
};

struct KidneyMeasurement {
  std::optional<double> length_mm;
  std::optional<double> width_mm;
  std::optional<double> thickness_mm;
  std::optional<double> volume_mm3;
  MeasurementSource source = MeasurementSource::kAutomatic;

  bool Complete() const { return length_mm && width_mm && thickness_mm; }
};

template <typename Scalar>
Rot2<Scalar> Rotation(Scalar theta) {
  using std::cos;
  using std::sin;
  const Scalar c = cos(theta);
  const Scalar s = sin(theta);
  Rot2<Scalar> r;
  r << c, -s, s, c;
  return r;
}

// Maps an angle into (-pi/2, pi/2]; a line orientation is defined modulo pi.
template <typename Scalar>
Scalar NormalizeHalfTurn(Scalar theta) {
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar half = pi / 2;
  while (theta <= -half) theta += pi;
  while (theta > half) theta -= pi;
  return theta;
}

PixelSet SelectRegion(const Mask& mask, ClassSelector selector);

// Largest 8-connected component; ties go to the component whose first pixel
// in row-major order comes first. Output is row-major.
PixelSet LargestComponent(const PixelSet& points);

namespace detail {

inline void RequireNonEmpty(const PixelSet& points) {
  if (points.cols() == 0) {
    throw Error(ErrorCode::kEmptyRegion, "point set is empty");
  }
}

// Offsets from the first pixel. Integer subtraction is exact, so everything
// computed from these is bit-identical under integer translation.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, Eigen::Dynamic> LocalOffsets(const PixelSet& points) {
  const Eigen::Vector2i origin = points.col(0);
  return (points.colwise() - origin).template cast<Scalar>();
}

template <typename Scalar>
Vec2<Scalar> Origin(const PixelSet& points) {
  return points.col(0).template cast<Scalar>();
}

}  // namespace detail

template <typename Scalar = double>
Vec2<Scalar> Centroid(const PixelSet& points) {
  detail::RequireNonEmpty(points);
  const auto local = detail::LocalOffsets<Scalar>(points);
  return detail::Origin<Scalar>(points) + local.rowwise().mean();
}

template <typename Scalar = double>
Scatter2<Scalar> Scatter(const PixelSet& points) {
  detail::RequireNonEmpty(points);
  const auto local = detail::LocalOffsets<Scalar>(points);
  const Vec2<Scalar> mean = local.rowwise().mean();
  const Eigen::Matrix<Scalar, 2, Eigen::Dynamic> centered =
      local.colwise() - mean;
  const Eigen::Matrix<Scalar, 2, 2> c = centered * centered.transpose();

  Scatter2<Scalar> s;
  s.sxx = c(0, 0);
  s.syy = c(1, 1);
  s.sxy = c(0, 1);
  // Rounding can push a near-collinear set past Cauchy-Schwarz by an ulp.
  if (s.sxy * s.sxy > s.sxx * s.syy) {
    using std::copysign;
    using std::sqrt;
    s.sxy = copysign(sqrt(s.sxx * s.syy), s.sxy);
  }
  s.centroid = detail::Origin<Scalar>(points) + mean;
  return s;
}

// Half-angle of atan2 instead of a plain arctangent of the ratio, so the
// Sxx == Syy case and the quadrant signs resolve. Isotropic input gives 0.
template <typename Scalar>
Scalar PrincipalOrientation(const Scatter2<Scalar>& s) {
  const Scalar diff = s.sxx - s.syy;
  if (s.sxy == Scalar(0) && diff == Scalar(0)) return Scalar(0);
  using std::atan2;
  return NormalizeHalfTurn(Scalar(0.5) * atan2(Scalar(2) * s.sxy, diff));
}

namespace detail {

template <typename Scalar>
void FinishBox(OrientedBox<Scalar>& box, const Vec2<Scalar>& pivot,
               const Vec2<Scalar>& lo, const Vec2<Scalar>& hi) {
  const Rot2<Scalar> r = Rotation(box.theta);
  box.extent_u = hi.x() - lo.x();
  box.extent_v = hi.y() - lo.y();
  box.extent_major = std::max(box.extent_u, box.extent_v);
  box.extent_minor = std::min(box.extent_u, box.extent_v);
  box.center = pivot + r * ((lo + hi) / Scalar(2));
  box.corners = {pivot + r * Vec2<Scalar>(lo.x(), lo.y()),
                 pivot + r * Vec2<Scalar>(hi.x(), lo.y()),
                 pivot + r * Vec2<Scalar>(hi.x(), hi.y()),
                 pivot + r * Vec2<Scalar>(lo.x(), hi.y())};
}

}  // namespace detail

// Rotates the set by -theta about its centroid, takes the axis-aligned
// min/max there, and rotates the footprint corners back by theta.
template <typename Scalar = double>
OrientedBox<Scalar> OrientedBoundingBox(const PixelSet& points) {
  detail::RequireNonEmpty(points);
  const auto local = detail::LocalOffsets<Scalar>(points);
  const Vec2<Scalar> mean = local.rowwise().mean();
  const Eigen::Matrix<Scalar, 2, Eigen::Dynamic> centered =
      local.colwise() - mean;

  const Scatter2<Scalar> s = Scatter<Scalar>(points);
  OrientedBox<Scalar> box;
  box.theta = PrincipalOrientation(s);

  const Eigen::Matrix<Scalar, 2, Eigen::Dynamic> aligned =
      Rotation(box.theta).transpose() * centered;
  const Scalar half(0.5);
  const Vec2<Scalar> lo =
      aligned.rowwise().minCoeff() - Vec2<Scalar>::Constant(half);
  const Vec2<Scalar> hi =
      aligned.rowwise().maxCoeff() + Vec2<Scalar>::Constant(half);
  detail::FinishBox(box, Vec2<Scalar>(detail::Origin<Scalar>(points) + mean),
                    lo, hi);
  return box;
}

// Re-derives a rectangle from four user-supplied corners given in the same
// order OrientedBoundingBox emits them. The axis follows the two u-edges; the
// extents are the corner spread along each axis, so an off-rectangle drag of
// one corner still lengthens the box by the drag's projection.
template <typename Scalar = double>
OrientedBox<Scalar> BoxFromCorners(const std::array<Vec2<Scalar>, 4>& corners) {
  const Vec2<Scalar> u_dir =
      (corners[1] - corners[0]) + (corners[2] - corners[3]);
  if (u_dir.norm() == Scalar(0)) {
    throw Error(ErrorCode::kInvalidArgument, "degenerate corner set");
  }
  OrientedBox<Scalar> box;
  using std::atan2;
  box.theta = NormalizeHalfTurn(atan2(u_dir.y(), u_dir.x()));

  Vec2<Scalar> pivot = Vec2<Scalar>::Zero();
  for (const auto& c : corners) pivot += c;
  pivot /= Scalar(4);

  const Rot2<Scalar> rt = Rotation(box.theta).transpose();
  Vec2<Scalar> lo = Vec2<Scalar>::Constant(std::numeric_limits<Scalar>::max());
  Vec2<Scalar> hi = -lo;
  for (const auto& c : corners) {
    const Vec2<Scalar> p = rt * (c - pivot);
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  detail::FinishBox(box, pivot, lo, hi);
  return box;
}

// Coronal fills length; transverse fills width (major) and thickness (minor).
KidneyMeasurement ExtractDimensions(const OrientedBox<double>& box, View view,
                                    double pixel_spacing);

// V = (pi/6) L W T. Factors are multiplied in sorted order so the result is
// bit-identical under any argument permutation.
template <typename Scalar>
Scalar EllipsoidVolume(Scalar length, Scalar width, Scalar thickness) {
  if (!(length > Scalar(0)) || !(width > Scalar(0)) ||
      !(thickness > Scalar(0))) {
    throw Error(ErrorCode::kNonPositiveDimension,
                "ellipsoid dimensions must be positive");
  }
  std::array<Scalar, 3> d{length, width, thickness};
  std::sort(d.begin(), d.end());
  return std::numbers::pi_v<Scalar> / Scalar(6) * (d[0] * d[1] * d[2]);
}

struct MaskMeasurement {
  OrientedBox<double> box;
  KidneyMeasurement measurement;
  long pixel_count = 0;
};

// select -> largest component -> oriented box -> dimensions.
MaskMeasurement MeasureMask(const Mask& mask, View view,
                            ClassSelector selector = ClassSelector::kUnion);

}  // namespace usar::geometry
