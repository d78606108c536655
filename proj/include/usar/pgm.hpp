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

#include <filesystem>

#include "usar/mask.hpp"

namespace usar::io {

// Binary portable graymap (P5), maxval 255 only. Throws kMalformedFile.
GrayImage ReadPgm(const std::filesystem::path& path);
void WritePgm(const std::filesystem::path& path, const GrayImage& image);

// Masks are P5 files whose pixel values are exactly {0, 1, 2}.
Mask ReadMaskPgm(const std::filesystem::path& path, double pixel_spacing = 1.0);
void WriteMaskPgm(const std::filesystem::path& path, const Mask& mask);

}  // namespace usar::io
