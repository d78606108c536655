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

#include <cstddef>
#include <cstdint>
#include <vector>

namespace usar {

enum class Label : std::uint8_t {
  kBackground = 0,
  kCortex = 1,
  kCentralComplex = 2,
};

// Row-major 8-bit grayscale frame.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return pixels[Index(x, y)]; }
  std::uint8_t at(int x, int y) const { return pixels[Index(x, y)]; }
  bool empty() const { return pixels.empty(); }
  std::size_t Index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Labeled segmentation grid: 0 background, 1 cortex, 2 central complex.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;
  double pixel_spacing = 1.0;  // mm per pixel, isotropic

  Mask() = default;
  Mask(int w, int h, double spacing = 1.0)
      : width(w),
        height(h),
        labels(static_cast<std::size_t>(w) * h, 0),
        pixel_spacing(spacing) {}

  std::uint8_t& at(int x, int y) { return labels[Index(x, y)]; }
  std::uint8_t at(int x, int y) const { return labels[Index(x, y)]; }
  std::size_t Index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::size_t size() const { return labels.size(); }

  // Throws Error(kInvalidArgument) when an invariant is broken.
  void Validate() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

bool SameShape(const Mask& a, const Mask& b);

}  // namespace usar
