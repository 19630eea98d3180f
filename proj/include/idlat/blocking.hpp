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
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "idlat/importance.hpp"
#include "idlat/volume.hpp"

namespace idlat {

/// Geometry of block-wise processing. Each block covers `content`^3 voxels
/// of the domain and is surrounded by `pad` voxels of actual neighbouring data.
struct BlockSpec {
  int content = 16;
  int pad = 4;

  int padded_edge() const { return content + 2 * pad; }
  Dims grid_dims(const Dims& volume) const;
  void validate() const;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct BlockIndex {
  int bi = 0;
  int bj = 0;
  int bk = 0;

  auto operator<=>(const BlockIndex&) const = default;
};

std::string to_string(const BlockIndex& b);

/// Grid order is x-fastest, matching voxel order.
inline std::size_t grid_linear_index(const Dims& grid, const BlockIndex& b) {
  return linear_index(grid, b.bi, b.bj, b.bk);
}

struct DataBlock {
  BlockIndex index;
  int edge = 0;                         // padded edge length
  std::vector<double> values;           // edge^3, x-fastest
  std::vector<double> importance;       // edge^3
  std::vector<std::uint8_t> mask;       // edge^3, 1 = valid voxel
  std::array<int, 3> valid_extent{};    // in-domain size of the content region

  std::size_t voxel_count() const { return values.size(); }
};

/// Splits a volume and its importance map into padded blocks. Padding reads
/// actual neighbouring data and clamps (edge-replicates) at the domain border.
std::vector<DataBlock> partition(const Volume& v, const ImportanceMap& importance,
                                 const BlockSpec& spec);

/// One padded block whose content region starts at `corner` (voxel
/// coordinates). The index is left at zero.
DataBlock extract_block(const Volume& v, const ImportanceMap& importance, const BlockSpec& spec,
                        const std::array<int, 3>& corner);

/// `count` blocks with content corners drawn uniformly so the content lies
/// inside the domain; block n carries index (n, 0, 0). Used to build
/// training sets larger than the block grid.
std::vector<DataBlock> random_blocks(const Volume& v, const ImportanceMap& importance, const BlockSpec& spec,
                                     int count, std::uint64_t seed);

/// Places each block's centre crop back into a volume of `dims`. Blocks may
/// arrive in any order; missing or duplicate indices are errors.
Volume reassemble(std::span<const DataBlock> blocks, const BlockSpec& spec, const Dims& dims);

/// Shannon entropy (bits) of the value histogram over the in-domain content
/// region. Values are clamped into `range` before binning.
double block_entropy(const DataBlock& block, const BlockSpec& spec, int bins,
                     ValueRange range = {0.0, 1.0});

struct TrainingSample {
  std::vector<DataBlock> blocks;
  int high_count = 0;
  int low_count = 0;
  bool backfilled = false;  // one side ran short and the other filled in
};

/// Complexity-aware sampling: blocks strictly above the median entropy form
/// the high side, the rest the low side. Draws round(n * rh / (rh + rl)) from
/// the high side and the remainder from the low side, without replacement.
TrainingSample sample_training_blocks(std::span<const DataBlock> blocks, int n,
                                      std::pair<int, int> ratio_high_low, int bins,
                                      std::uint64_t seed, const BlockSpec& spec);

}  // namespace idlat
