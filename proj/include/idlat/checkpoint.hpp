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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "idlat/network.hpp"

namespace idlat {

using ModelHash = std::array<std::uint8_t, 16>;

std::string to_hex(const ModelHash& h);

/// Checkpoint container:
///   "IDLM" | u32 version | u32 header length | JSON header |
///   f64 LE tensor data in header order | 16-byte BLAKE2b of all previous bytes.
/// The JSON header holds the model config, normalization, block spec and the
/// tensor directory (name, group, shape).
std::vector<std::uint8_t> serialize_model(const Model& m);
Model deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// Content hash of the model as stored in a checkpoint; also written into
/// every bitstream produced with it.
ModelHash model_hash(const Model& m);

}  // namespace idlat
