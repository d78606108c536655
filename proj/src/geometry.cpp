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

#include <deque>
#include <vector>

namespace usar {

void Mask::Validate() const {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "mask dimensions must be positive");
  }
  if (labels.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kInvalidArgument, "label count != width * height");
  }
  if (!(pixel_spacing > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel spacing must be positive");
  }
  for (std::uint8_t v : labels) {
    if (v > 2) {
      throw Error(ErrorCode::kInvalidArgument, "label outside {0,1,2}");
    }
  }
}

bool SameShape(const Mask& a, const Mask& b) {
  return a.width == b.width && a.height == b.height;
}

namespace geometry {
namespace {

bool Matches(std::uint8_t label, ClassSelector selector) {
  switch (selector) {
    case ClassSelector::kCortex:
      return label == static_cast<std::uint8_t>(Label::kCortex);
    case ClassSelector::kCentralComplex:
      return label == static_cast<std::uint8_t>(Label::kCentralComplex);
    case ClassSelector::kUnion:
      return label != 0;
  }
  return false;
}

}  // namespace

PixelSet SelectRegion(const Mask& mask, ClassSelector selector) {
  mask.Validate();
  long count = 0;
  for (std::uint8_t v : mask.labels) count += Matches(v, selector) ? 1 : 0;
  if (count == 0) {
    throw Error(ErrorCode::kEmptyRegion, "no pixel matches the selector");
  }
  PixelSet out(2, count);
  long k = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (Matches(mask.at(x, y), selector)) {
        out(0, k) = x;
        out(1, k) = y;
        ++k;
      }
    }
  }
  return out;
}

PixelSet LargestComponent(const PixelSet& points) {
  detail::RequireNonEmpty(points);
  const Eigen::Vector2i lo = points.rowwise().minCoeff();
  const Eigen::Vector2i hi = points.rowwise().maxCoeff();
  const long w = static_cast<long>(hi.x()) - lo.x() + 1;
  const long h = static_cast<long>(hi.y()) - lo.y() + 1;

  // 0 = absent, -1 = present and unvisited, k > 0 = component id.
  std::vector<int> grid(static_cast<std::size_t>(w * h), 0);
  auto cell = [&](long x, long y) -> int& {
    return grid[static_cast<std::size_t>((y - lo.y()) * w + (x - lo.x()))];
  };
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    cell(points(0, i), points(1, i)) = -1;
  }

  int best_id = 0;
  long best_size = 0;
  int next_id = 0;
  std::deque<std::pair<long, long>> queue;
  for (long y = lo.y(); y <= hi.y(); ++y) {
    for (long x = lo.x(); x <= hi.x(); ++x) {
      if (cell(x, y) != -1) continue;
      const int id = ++next_id;
      long size = 0;
      cell(x, y) = id;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        ++size;
        for (long dy = -1; dy <= 1; ++dy) {
          for (long dx = -1; dx <= 1; ++dx) {
            const long nx = cx + dx;
            const long ny = cy + dy;
            if (nx < lo.x() || nx > hi.x() || ny < lo.y() || ny > hi.y()) {
              continue;
            }
            if (cell(nx, ny) == -1) {
              cell(nx, ny) = id;
              queue.emplace_back(nx, ny);
            }
          }
        }
      }
      // Row-major scan finds components in top-left order, so strict '>'
      // keeps the earlier one on ties.
      if (size > best_size) {
        best_size = size;
        best_id = id;
      }
    }
  }

  PixelSet out(2, best_size);
  long k = 0;
  for (long y = lo.y(); y <= hi.y(); ++y) {
    for (long x = lo.x(); x <= hi.x(); ++x) {
      if (cell(x, y) == best_id) {
        out(0, k) = static_cast<int>(x);
        out(1, k) = static_cast<int>(y);
        ++k;
      }
    }
  }
  return out;
}

KidneyMeasurement ExtractDimensions(const OrientedBox<double>& box, View view,
                                    double pixel_spacing) {
  if (!(pixel_spacing > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel spacing must be positive");
  }
  KidneyMeasurement m;
  if (view == View::kCoronal) {
    m.length_mm = box.extent_major * pixel_spacing;
  } else {
    m.width_mm = box.extent_major * pixel_spacing;
    m.thickness_mm = box.extent_minor * pixel_spacing;
  }
  return m;
}

MaskMeasurement MeasureMask(const Mask& mask, View view,
                            ClassSelector selector) {
  const PixelSet region = LargestComponent(SelectRegion(mask, selector));
  MaskMeasurement out;
  out.box = OrientedBoundingBox<double>(region);
  out.measurement = ExtractDimensions(out.box, view, mask.pixel_spacing);
  out.pixel_count = static_cast<long>(region.cols());
  return out;
}

}  // namespace geometry
}  // namespace usar
