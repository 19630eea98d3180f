// Copyright (c) the IDLat authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "idlat/error.hpp"

namespace idlat {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInput: return "input";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kDegenerateRange: return "degenerate_range";
    case ErrorCode::kEmptySurface: return "empty_surface";
    case ErrorCode::kEmptyRegion: return "empty_region";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kMissingBlock: return "missing_block";
    case ErrorCode::kDuplicateBlock: return "duplicate_block";
    case ErrorCode::kAlphabet: return "alphabet";
    case ErrorCode::kHashMismatch: return "hash_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kDegenerateAffinity: return "degenerate_affinity";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kZeroNorm: return "zero_norm";
    case ErrorCode::kFormat: return "format";
  }
  return "unknown";
}

}  // namespace idlat
