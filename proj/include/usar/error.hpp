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

#include <stdexcept>
#include <string>
#include <string_view>

namespace usar {

enum class ErrorCode {
  kEmptyRegion,
  kNonPositiveDimension,
  kInvalidArgument,
  kShapeMismatch,
  kEmptyDataset,
  kBadMagic,
  kBadVersion,
  kTruncated,
  kBoundsViolation,
  kOversize,
  kBadChannel,
  kMissingDirectory,
  kMalformedFile,
  kDimensionMismatch,
  kProviderTimeout,
  kProviderCrashed,
  kIllegalTransition,
  kNoFrameAvailable,
  kMeasurementFailed,
  kUnknownCommand,
  kNotSubscribed,
};

// Stable upper-snake identifier, used on the wire in `ERR <code>` replies.
std::string_view ToString(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ToString(code)) + ": " + what),
        code_(code) {}
  explicit Error(ErrorCode code)
      : std::runtime_error(std::string(ToString(code))), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace usar
