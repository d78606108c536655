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

#include <algorithm>
#include <cmath>
#include <fstream>

#include "usar/error.hpp"
#include "usar/server.hpp"

namespace usar::server {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void Bad(const std::string& key, const std::string& value) {
  throw Error(ErrorCode::kInvalidArgument, "bad value for " + key + ": '" + value + "'");
}

double ToDouble(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size() && std::isfinite(v)) return v;
  } catch (...) {
  }
  Bad(key, value);
}

std::uint64_t ToUnsigned(const std::string& key, const std::string& value,
                         std::uint64_t max) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos ||
      value.size() > 19) {
    Bad(key, value);
  }
  const std::uint64_t v = std::stoull(value);
  if (v > max) Bad(key, value);
  return v;
}

}  // namespace

void ServerConfig::Set(const std::string& raw_key, const std::string& value) {
  std::string key = raw_key;
  std::replace(key.begin(), key.end(), '-', '_');
  if (key == "source") {
    if (value != "phantom" && value.rfind("replay:", 0) != 0) Bad(key, value);
    source = value;
  } else if (key == "provider") {
    providers::ProviderSpec::Parse(value);
    provider = value;
  } else if (key == "latency_profile") {
    latency = providers::LatencyModel::Parse(value);
  } else if (key == "fps") {
    fps = ToDouble(key, value);
  } else if (key == "bind") {
    bind = value;
  } else if (key == "udp_port") {
    udp_port = static_cast<std::uint16_t>(ToUnsigned(key, value, 65535));
  } else if (key == "ws_port") {
    ws_port = static_cast<std::uint16_t>(ToUnsigned(key, value, 65535));
  } else if (key == "pixel_spacing") {
    pixel_spacing = ToDouble(key, value);
  } else if (key == "size") {
    const auto x = value.find('x');
    if (x == std::string::npos) Bad(key, value);
    width = static_cast<int>(ToUnsigned(key, value.substr(0, x), 65535));
    height = static_cast<int>(ToUnsigned(key, value.substr(x + 1), 65535));
  } else if (key == "seed") {
    seed = ToUnsigned(key, value, UINT64_MAX);
  } else if (key == "artifact") {
    if (value == "none") {
      artifact = providers::ArtifactMode::kNone;
    } else if (value == "mild") {
      artifact = providers::ArtifactMode::kMild;
    } else if (value == "severe") {
      artifact = providers::ArtifactMode::kSevere;
    } else {
      Bad(key, value);
    }
  } else if (key == "max_frames") {
    max_frames = ToUnsigned(key, value, UINT32_MAX);
  } else if (key == "event_log") {
    event_log = value;
  } else if (key == "heartbeat_timeout_ms") {
    heartbeat_timeout = std::chrono::milliseconds(ToUnsigned(key, value, 3600000));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + raw_key + "'");
  }
}

void ServerConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMalformedFile, path.string() + ": cannot open");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kMalformedFile,
                  path.filename().string() + ":" + std::to_string(n) + ": expected key=value");
    }
    try {
      Set(Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformedFile,
                  path.filename().string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void ServerConfig::Validate() const {
  if (!(fps > 0.0 && fps <= 1000.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fps must be in (0, 1000]");
  }
  if (!(pixel_spacing > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel spacing must be positive");
  }
  latency.Validate();
  providers::ProviderSpec::Parse(provider);
  if (source == "phantom") Phantom().Validate();
}

providers::PhantomSpec ServerConfig::Phantom() const {
  providers::PhantomSpec spec;
  // The default kidney is drawn for 512x512; other sizes scale it.
  const double scale = std::min(width, height) / 512.0;
  spec.width = width;
  spec.height = height;
  spec.semi_major *= scale;
  spec.semi_minor *= scale;
  spec.drift_amplitude *= scale;
  spec.artifact = artifact;
  spec.pixel_spacing = pixel_spacing;
  spec.seed = seed;
  return spec;
}

std::unique_ptr<providers::FrameSource> ServerConfig::MakeSource() const {
  if (source == "phantom") return std::make_unique<providers::PhantomSource>(Phantom());
  return std::make_unique<providers::ReplaySource>(source.substr(7), pixel_spacing);
}

std::unique_ptr<providers::Provider> ServerConfig::MakeProvider() const {
  return providers::MakeProvider(providers::ProviderSpec::Parse(provider), latency, seed);
}

}  // namespace usar::server
