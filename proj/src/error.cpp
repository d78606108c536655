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

#include "usar/error.hpp"

namespace usar {

std::string_view ToString(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyRegion: return "EMPTY_REGION";
    case ErrorCode::kNonPositiveDimension: return "NON_POSITIVE_DIMENSION";
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::kEmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::kBadMagic: return "BAD_MAGIC";
    case ErrorCode::kBadVersion: return "BAD_VERSION";
    case ErrorCode::kTruncated: return "TRUNCATED";
    case ErrorCode::kBoundsViolation: return "BOUNDS_VIOLATION";
    case ErrorCode::kOversize: return "OVERSIZE";
    case ErrorCode::kBadChannel: return "BAD_CHANNEL";
    case ErrorCode::kMissingDirectory: return "MISSING_DIRECTORY";
    case ErrorCode::kMalformedFile: return "MALFORMED_FILE";
    case ErrorCode::kDimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::kProviderTimeout: return "PROVIDER_TIMEOUT";
    case ErrorCode::kProviderCrashed: return "PROVIDER_CRASHED";
    case ErrorCode::kIllegalTransition: return "ILLEGAL_TRANSITION";
    case ErrorCode::kNoFrameAvailable: return "NO_FRAME_AVAILABLE";
    case ErrorCode::kMeasurementFailed: return "MEASUREMENT_FAILED";
    case ErrorCode::kUnknownCommand: return "UNKNOWN_COMMAND";
    case ErrorCode::kNotSubscribed: return "NOT_SUBSCRIBED";
  }
  return "UNKNOWN";
}

}  // namespace usar
