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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "usar/error.hpp"
#include "usar/pgm.hpp"

namespace usar::providers {
namespace {

constexpr double kPi = std::numbers::pi;

// splitmix64 finalizer; a fixed integer function, identical everywhere.
std::uint64_t Mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Uniform in [0, 1) from the top 53 bits.
double Unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

struct Wedge {
  Eigen::Vector2d apex;
  Eigen::Vector2d axis;  // unit direction from apex to the target
  double cos_half;
};

Wedge MakeWedge(const PhantomSpec& spec, const Eigen::Vector2d& center) {
  const Eigen::Vector2d apex(spec.width / 2.0, -spec.height / 2.0);
  const Eigen::Vector2d major(std::cos(spec.theta), std::sin(spec.theta));
  Eigen::Vector2d target = center;
  double half_width = 0.2 * spec.semi_major;
  if (spec.artifact == ArtifactMode::kMild) {
    target = center + 0.9 * spec.semi_major * major;
    half_width = 0.06 * spec.semi_major;
  }
  const Eigen::Vector2d d = target - apex;
  const double half_angle = std::atan(half_width / d.norm());
  return Wedge{apex, d.normalized(), std::cos(half_angle)};
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ParseDouble(const std::filesystem::path& path, const std::string& key,
                   const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v) || v <= 0.0) throw 0;
    return v;
  } catch (...) {
    throw Error(ErrorCode::kMalformedFile, path.filename().string() + ": bad " +
                                               key + " '" + value + "'");
  }
}

bool EndsWith(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void PhantomSpec::Validate() const {
  auto fail = [](const std::string& why) {
    throw Error(ErrorCode::kInvalidArgument, "phantom: " + why);
  };
  if (width <= 0 || height <= 0) fail("image size must be positive");
  if (!(semi_minor > 0.0) || semi_minor > semi_major) fail("need 0 < b <= a");
  if (!(inner_scale > 0.0 && inner_scale < 1.0)) fail("scale must be in (0,1)");
  if (!(noise >= 0.0 && noise <= 1.0)) fail("noise must be in [0,1]");
  if (!(pixel_spacing > 0.0)) fail("pixel spacing must be positive");
  if (!(drift_period > 0.0) || drift_amplitude < 0.0) fail("bad drift");
  const double reach = semi_major + drift_amplitude + 1.0;
  if (2.0 * reach > std::min(width, height)) fail("kidney does not fit");
}

PhantomFrame PhantomNext(const PhantomSpec& spec, std::uint64_t t) {
  spec.Validate();
  const double phase = 2.0 * kPi * static_cast<double>(t) / spec.drift_period;
  const Eigen::Vector2d center(
      spec.width / 2.0 + spec.drift_amplitude * std::sin(phase),
      spec.height / 2.0 + 0.5 * spec.drift_amplitude * std::sin(2.0 * phase));

  PhantomFrame frame{GrayImage(spec.width, spec.height),
                     Mask(spec.width, spec.height, spec.pixel_spacing), center};
  const double c = std::cos(spec.theta);
  const double s = std::sin(spec.theta);
  const double a2 = spec.semi_major * spec.semi_major;
  const double b2 = spec.semi_minor * spec.semi_minor;
  const double k2 = spec.inner_scale * spec.inner_scale;
  const std::uint64_t stream = Mix(spec.seed ^ Mix(t));
  const bool shadowed = spec.artifact != ArtifactMode::kNone;
  const Wedge wedge = MakeWedge(spec, center);

  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double dx = x - center.x();
      const double dy = y - center.y();
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      const double r = u * u / a2 + v * v / b2;
      std::uint8_t label = 0;
      double base = 40.0;
      if (r <= k2) {
        label = 2;
        base = 210.0;
      } else if (r <= 1.0) {
        label = 1;
        base = 130.0;
      }
      if (shadowed) {
        const Eigen::Vector2d p = Eigen::Vector2d(x, y) - wedge.apex;
        if (p.dot(wedge.axis) >= wedge.cos_half * p.norm()) {
          label = 0;
          base *= 0.2;
        }
      }
      const std::size_t idx = frame.mask.Index(x, y);
      const double h = Unit(Mix(stream + idx));
      const double value = base * (1.0 + spec.noise * (2.0 * h - 1.0));
      frame.image.pixels[idx] =
          static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
      frame.mask.labels[idx] = label;
    }
  }
  return frame;
}

geometry::KidneyMeasurement PhantomTruth(const PhantomSpec& spec,
                                         geometry::View view) {
  geometry::KidneyMeasurement m;
  const double major = (2.0 * spec.semi_major + 1.0) * spec.pixel_spacing;
  const double minor = (2.0 * spec.semi_minor + 1.0) * spec.pixel_spacing;
  if (view == geometry::View::kCoronal) {
    m.length_mm = major;
  } else {
    m.width_mm = major;
    m.thickness_mm = minor;
  }
  return m;
}

PhantomSource::PhantomSource(PhantomSpec spec, std::optional<std::uint64_t> limit)
    : spec_(spec), limit_(limit) {
  spec_.Validate();
}

std::optional<SourceFrame> PhantomSource::Next() {
  if (limit_ && t_ >= *limit_) return std::nullopt;
  PhantomFrame f = PhantomNext(spec_, t_);
  SourceFrame out;
  out.index = static_cast<std::uint32_t>(t_);
  out.name = "phantom" + std::to_string(t_);
  out.image = std::move(f.image);
  out.ground_truth = std::move(f.mask);
  out.pixel_spacing = spec_.pixel_spacing;
  ++t_;
  return out;
}

ReplayMeta ReadMeta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kMalformedFile,
                path.filename().string() + ": cannot open");
  }
  ReplayMeta meta;
  std::string line;
  while (std::getline(in, line)) {
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kMalformedFile,
                  path.filename().string() + ": expected key=value, got '" +
                      line + "'");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (key == "pixel_spacing_mm") {
      meta.pixel_spacing_mm = ParseDouble(path, key, value);
    } else if (key == "view") {
      if (value == "coronal") {
        meta.view = geometry::View::kCoronal;
      } else if (value == "transverse") {
        meta.view = geometry::View::kTransverse;
      } else {
        throw Error(ErrorCode::kMalformedFile,
                    path.filename().string() + ": unknown view '" + value + "'");
      }
    } else if (key == "reference_length_mm") {
      meta.reference.length_mm = ParseDouble(path, key, value);
    } else if (key == "reference_width_mm") {
      meta.reference.width_mm = ParseDouble(path, key, value);
    } else if (key == "reference_thickness_mm") {
      meta.reference.thickness_mm = ParseDouble(path, key, value);
    }
    // Other keys are tolerated so sidecars can carry site-specific notes.
  }
  return meta;
}

void WriteMeta(const std::filesystem::path& path, const ReplayMeta& meta) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kMalformedFile, "cannot write " + path.string());
  out.precision(17);
  if (meta.pixel_spacing_mm) out << "pixel_spacing_mm=" << *meta.pixel_spacing_mm << "\n";
  if (meta.view) {
    out << "view="
        << (*meta.view == geometry::View::kCoronal ? "coronal" : "transverse")
        << "\n";
  }
  if (meta.reference.length_mm)
    out << "reference_length_mm=" << *meta.reference.length_mm << "\n";
  if (meta.reference.width_mm)
    out << "reference_width_mm=" << *meta.reference.width_mm << "\n";
  if (meta.reference.thickness_mm)
    out << "reference_thickness_mm=" << *meta.reference.thickness_mm << "\n";
}

ReplaySource::ReplaySource(const std::filesystem::path& directory,
                           double default_spacing)
    : dir_(directory), default_spacing_(default_spacing) {
  std::error_code ec;
  if (!std::filesystem::is_directory(directory, ec)) {
    throw Error(ErrorCode::kMissingDirectory, directory.string());
  }
  std::vector<std::string> images;
  std::vector<std::string> masks;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (EndsWith(name, ".mask.pgm")) {
      masks.push_back(name.substr(0, name.size() - 9));
    } else if (EndsWith(name, ".pgm")) {
      images.push_back(name);
    }
  }
  std::sort(images.begin(), images.end());
  for (const auto& img : images) stems_.push_back(img.substr(0, img.size() - 4));
  for (const auto& m : masks) {
    if (!std::binary_search(images.begin(), images.end(), m + ".pgm")) {
      throw Error(ErrorCode::kMalformedFile, m + ".mask.pgm: no matching image");
    }
  }
}

std::optional<SourceFrame> ReplaySource::Next() {
  if (next_ >= stems_.size()) return std::nullopt;
  const std::string stem = stems_[next_];
  SourceFrame out;
  out.index = static_cast<std::uint32_t>(next_);
  out.name = stem;
  ++next_;

  out.pixel_spacing = default_spacing_;
  const auto meta_path = dir_ / (stem + ".meta");
  if (std::filesystem::exists(meta_path)) {
    const ReplayMeta meta = ReadMeta(meta_path);
    if (meta.pixel_spacing_mm) out.pixel_spacing = *meta.pixel_spacing_mm;
    out.view = meta.view;
    out.reference = meta.reference;
  }
  out.image = io::ReadPgm(dir_ / (stem + ".pgm"));
  const auto mask_path = dir_ / (stem + ".mask.pgm");
  if (std::filesystem::exists(mask_path)) {
    Mask m = io::ReadMaskPgm(mask_path, out.pixel_spacing);
    if (m.width != out.image.width || m.height != out.image.height) {
      throw Error(ErrorCode::kDimensionMismatch,
                  stem + ": mask " + std::to_string(m.width) + "x" +
                      std::to_string(m.height) + " vs image " +
                      std::to_string(out.image.width) + "x" +
                      std::to_string(out.image.height));
    }
    out.ground_truth = std::move(m);
  }
  return out;
}

std::vector<SourceFrame> LoadReplay(const std::filesystem::path& directory,
                                    double default_spacing) {
  ReplaySource src(directory, default_spacing);
  std::vector<SourceFrame> out;
  while (auto f = src.Next()) out.push_back(std::move(*f));
  return out;
}

void WriteReplay(const std::filesystem::path& directory,
                 const std::vector<SourceFrame>& frames) {
  std::filesystem::create_directories(directory);
  for (const auto& f : frames) {
    io::WritePgm(directory / (f.name + ".pgm"), f.image);
    if (f.ground_truth) io::WriteMaskPgm(directory / (f.name + ".mask.pgm"), *f.ground_truth);
    ReplayMeta meta;
    meta.pixel_spacing_mm = f.pixel_spacing;
    meta.view = f.view;
    meta.reference = f.reference;
    WriteMeta(directory / (f.name + ".meta"), meta);
  }
}

std::vector<SourceFrame> MakePhantomDataset(int coronal, int transverse,
                                            std::uint64_t seed,
                                            ArtifactMode artifact,
                                            double pixel_spacing) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SourceFrame> out;
  const int total = coronal + transverse;
  for (int i = 0; i < total; ++i) {
    const bool is_coronal = i < coronal;
    PhantomSpec spec;
    spec.artifact = artifact;
    spec.pixel_spacing = pixel_spacing;
    spec.seed = seed + static_cast<std::uint64_t>(i);
    spec.noise = 0.2;
    if (is_coronal) {
      spec.semi_major = 90.0 + 60.0 * unit(rng);
      spec.semi_minor = spec.semi_major * (0.35 + 0.2 * unit(rng));
    } else {
      spec.semi_major = 45.0 + 30.0 * unit(rng);
      spec.semi_minor = spec.semi_major * (0.6 + 0.25 * unit(rng));
    }
    spec.theta = kPi * (unit(rng) - 0.5);
    const auto t = static_cast<std::uint64_t>(unit(rng) * spec.drift_period);
    PhantomFrame f = PhantomNext(spec, t);

    SourceFrame s;
    s.index = static_cast<std::uint32_t>(i);
    char name[32];
    std::snprintf(name, sizeof(name), "%s%04d", is_coronal ? "cor" : "tra", i);
    s.name = name;
    s.image = std::move(f.image);
    s.ground_truth = std::move(f.mask);
    s.pixel_spacing = pixel_spacing;
    s.view = is_coronal ? geometry::View::kCoronal : geometry::View::kTransverse;
    s.reference = PhantomTruth(spec, *s.view);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace usar::providers
