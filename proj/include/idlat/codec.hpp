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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "idlat/blocking.hpp"
#include "idlat/checkpoint.hpp"
#include "idlat/importance.hpp"
#include "idlat/network.hpp"
#include "idlat/rans.hpp"
#include "idlat/volume.hpp"

namespace idlat {

/// Codes integer symbols s_i in [0, pmfs[i].size()) with per-symbol pmfs.
std::vector<std::uint8_t> entropy_encode(std::span<const int> symbols,
                                         const std::vector<std::vector<double>>& pmfs);
std::vector<int> entropy_decode(std::span<const std::uint8_t> bytes,
                                const std::vector<std::vector<double>>& pmfs);

struct CompressedHeader {
  Dims dims;
  BlockSpec spec;
  int latent_channels = 0;
  int latent_spatial = 0;
  float vmin = 0.0f;
  float vmax = 1.0f;
  ModelHash model_hash{};
  std::uint32_t block_count = 0;
};

struct BlockPayload {
  std::vector<std::uint8_t> z;
  std::vector<std::uint8_t> y;
};

/// The IDLT bitstream: header plus per-block payloads in grid order.
struct CompressedVolume {
  CompressedHeader header;
  std::vector<BlockPayload> blocks;
};

inline constexpr std::size_t kHeaderBytes = 53;

std::vector<std::uint8_t> serialize(const CompressedVolume& cv);
CompressedVolume parse_compressed(std::span<const std::uint8_t> bytes);
void write_compressed(const CompressedVolume& cv, const std::filesystem::path& path);
CompressedVolume read_compressed(const std::filesystem::path& path);
std::size_t file_size(const CompressedVolume& cv);

struct CompressStats {
  std::size_t clamped = 0;    // latents clamped into the symbol alphabet
  double model_bits = 0.0;    // sum of -log2 p over coded symbols (y and z)
  std::size_t payload_bytes = 0;
};

/// Normalizes `v` with the model's parameters (rounded to f32, as stored in
/// the header), partitions it with the model's block spec and entropy-codes
/// every block's latents.
CompressedVolume compress_volume(const Volume& v, const ImportanceMap& importance, const Model& model,
                                 CompressStats* stats = nullptr);

/// Entropy-decodes the latents of every block. The model must be the one
/// used for compression.
std::vector<LatentBlock> decompress_latents(const CompressedVolume& cv, const Model& model);

/// Decodes all blocks and reassembles the denormalized volume.
Volume decompress_volume(const CompressedVolume& cv, const Model& model);

/// Per-block reconstructions (padded block values in normalized units).
std::vector<DataBlock> decode_blocks(const CompressedVolume& cv, const std::vector<LatentBlock>& latents,
                                     const Model& model);

/// original / file size.
double latent_size_ratio(std::uint64_t original_bytes, std::uint64_t file_bytes);

}  // namespace idlat
