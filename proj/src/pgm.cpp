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

#include "usar/pgm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "usar/error.hpp"

namespace usar::io {
namespace {

[[noreturn]] void Malformed(const std::filesystem::path& path,
                            const std::string& why) {
  throw Error(ErrorCode::kMalformedFile, path.filename().string() + ": " + why);
}

// Reads one header token, skipping whitespace and '#' comments.
std::string Token(const std::string& data, std::size_t& pos) {
  while (pos < data.size()) {
    if (std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    } else if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos])) &&
         data[pos] != '#') {
    ++pos;
  }
  return data.substr(start, pos - start);
}

int ParsePositive(const std::filesystem::path& path, const std::string& tok,
                  const char* what) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos ||
      tok.size() > 6) {
    Malformed(path, std::string("bad ") + what + " '" + tok + "'");
  }
  const int v = std::stoi(tok);
  if (v <= 0) Malformed(path, std::string(what) + " must be positive");
  return v;
}

}  // namespace

GrayImage ReadPgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Malformed(path, "cannot open");
  const std::string data((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (Token(data, pos) != "P5") Malformed(path, "not a binary PGM (P5)");
  const int width = ParsePositive(path, Token(data, pos), "width");
  const int height = ParsePositive(path, Token(data, pos), "height");
  const int maxval = ParsePositive(path, Token(data, pos), "maxval");
  if (maxval != 255) Malformed(path, "maxval must be 255");
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) {
    Malformed(path, "missing raster separator");
  }
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (data.size() - pos != n) {
    Malformed(path, "raster has " + std::to_string(data.size() - pos) +
                        " bytes, expected " + std::to_string(n));
  }
  GrayImage img(width, height);
  std::copy(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end(),
            img.pixels.begin());
  return img;
}

void WritePgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kMalformedFile, "cannot write " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

Mask ReadMaskPgm(const std::filesystem::path& path, double pixel_spacing) {
  const GrayImage raw = ReadPgm(path);
  Mask m(raw.width, raw.height, pixel_spacing);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    if (raw.pixels[i] > 2) {
      Malformed(path, "mask value " + std::to_string(raw.pixels[i]) +
                          " outside {0,1,2}");
    }
    m.labels[i] = raw.pixels[i];
  }
  return m;
}

void WriteMaskPgm(const std::filesystem::path& path, const Mask& mask) {
  GrayImage raw(mask.width, mask.height);
  raw.pixels = mask.labels;
  WritePgm(path, raw);
}

}  // namespace usar::io
