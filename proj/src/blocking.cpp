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

#include "idlat/blocking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "idlat/error.hpp"

namespace idlat {

Dims BlockSpec::grid_dims(const Dims& volume) const {
  auto cells = [&](int n) { return (n + content - 1) / content; };
  return {cells(volume.nx), cells(volume.ny), cells(volume.nz)};
}

void BlockSpec::validate() const {
  if (content < 4) throw Error(ErrorCode::kInvalidArgument, "block content must be >= 4");
  if (pad < 0) throw Error(ErrorCode::kInvalidArgument, "block pad must be >= 0");
}

std::string to_string(const BlockIndex& b) {
  return "(" + std::to_string(b.bi) + "," + std::to_string(b.bj) + "," + std::to_string(b.bk) + ")";
}

DataBlock extract_block(const Volume& v, const ImportanceMap& importance, const BlockSpec& spec,
                        const std::array<int, 3>& corner) {
  const auto& d = v.dims;
  const int edge = spec.padded_edge();
  const std::size_t block_voxels = static_cast<std::size_t>(edge) * edge * edge;
  DataBlock b;
  b.edge = edge;
  b.values.resize(block_voxels);
  b.importance.resize(block_voxels);
  b.mask.resize(block_voxels);
  for (int a = 0; a < 3; ++a) {
    if (corner[a] < 0 || corner[a] >= d[a]) {
      throw Error(ErrorCode::kInvalidArgument, "block corner outside volume " + to_string(d));
    }
    b.valid_extent[a] = std::min(spec.content, d[a] - corner[a]);
  }
  std::size_t out = 0;
  for (int z = 0; z < edge; ++z) {
    const int k = std::clamp(corner[2] - spec.pad + z, 0, d.nz - 1);
    for (int y = 0; y < edge; ++y) {
      const int j = std::clamp(corner[1] - spec.pad + y, 0, d.ny - 1);
      for (int x = 0; x < edge; ++x, ++out) {
        const int i = std::clamp(corner[0] - spec.pad + x, 0, d.nx - 1);
        const auto src = linear_index(d, i, j, k);
        b.values[out] = v.values[src];
        b.importance[out] = importance.values[src];
        b.mask[out] = v.valid(src) ? 1 : 0;
      }
    }
  }
  return b;
}

namespace {

void check_inputs(const Volume& v, const ImportanceMap& importance, const BlockSpec& spec) {
  spec.validate();
  const auto& d = v.dims;
  if (!(importance.dims == d)) {
    throw Error(ErrorCode::kShapeMismatch, "importance map is not co-registered with the volume");
  }
  if (d.nx < spec.content || d.ny < spec.content || d.nz < spec.content) {
    throw Error(ErrorCode::kInvalidArgument, "volume dims " + to_string(d) +
                                                 " smaller than block content " +
                                                 std::to_string(spec.content));
  }
}

}  // namespace

std::vector<DataBlock> partition(const Volume& v, const ImportanceMap& importance,
                                 const BlockSpec& spec) {
  check_inputs(v, importance, spec);
  const auto grid = spec.grid_dims(v.dims);
  std::vector<DataBlock> blocks;
  blocks.reserve(grid.count());
  for (int bk = 0; bk < grid.nz; ++bk) {
    for (int bj = 0; bj < grid.ny; ++bj) {
      for (int bi = 0; bi < grid.nx; ++bi) {
        DataBlock b = extract_block(v, importance, spec,
                                    {bi * spec.content, bj * spec.content, bk * spec.content});
        b.index = {bi, bj, bk};
        blocks.push_back(std::move(b));
      }
    }
  }
  return blocks;
}

std::vector<DataBlock> random_blocks(const Volume& v, const ImportanceMap& importance, const BlockSpec& spec,
                                     int count, std::uint64_t seed) {
  check_inputs(v, importance, spec);
  if (count < 0) throw Error(ErrorCode::kInvalidArgument, "block count must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<DataBlock> blocks;
  blocks.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    std::array<int, 3> corner{};
    for (int a = 0; a < 3; ++a) {
      corner[a] = static_cast<int>(rng() % static_cast<std::uint64_t>(v.dims[a] - spec.content + 1));
    }
    DataBlock b = extract_block(v, importance, spec, corner);
    b.index = {n, 0, 0};
    blocks.push_back(std::move(b));
  }
  return blocks;
}

Volume reassemble(std::span<const DataBlock> blocks, const BlockSpec& spec, const Dims& dims) {
  spec.validate();
  const auto grid = spec.grid_dims(dims);
  const int edge = spec.padded_edge();
  std::vector<const DataBlock*> slots(grid.count(), nullptr);
  for (const auto& b : blocks) {
    if (b.index.bi < 0 || b.index.bj < 0 || b.index.bk < 0 || b.index.bi >= grid.nx ||
        b.index.bj >= grid.ny || b.index.bk >= grid.nz) {
      throw Error(ErrorCode::kInvalidArgument, "block index " + to_string(b.index) +
                                                   " outside grid " + to_string(grid));
    }
    if (b.values.size() != static_cast<std::size_t>(edge) * edge * edge) {
      throw Error(ErrorCode::kShapeMismatch, "block " + to_string(b.index) + " has wrong size");
    }
    auto& slot = slots[grid_linear_index(grid, b.index)];
    if (slot != nullptr) {
      throw Error(ErrorCode::kDuplicateBlock, "duplicate block " + to_string(b.index));
    }
    slot = &b;
  }
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s] == nullptr) {
      const auto g = voxel_of(grid, s);
      throw Error(ErrorCode::kMissingBlock,
                  "missing block " + to_string(BlockIndex{g.i, g.j, g.k}));
    }
  }

  std::vector<double> values(dims.count());
  std::vector<std::uint8_t> mask(dims.count(), 1);
  bool any_invalid = false;
  for (const auto* b : slots) {
    const int base[3] = {b->index.bi * spec.content, b->index.bj * spec.content,
                         b->index.bk * spec.content};
    for (int z = 0; z < b->valid_extent[2]; ++z) {
      for (int y = 0; y < b->valid_extent[1]; ++y) {
        for (int x = 0; x < b->valid_extent[0]; ++x) {
          const auto src = linear_index({edge, edge, edge}, x + spec.pad, y + spec.pad, z + spec.pad);
          const auto dst = linear_index(dims, base[0] + x, base[1] + y, base[2] + z);
          values[dst] = b->values[src];
          if (!b->mask.empty() && b->mask[src] == 0) {
            mask[dst] = 0;
            any_invalid = true;
          }
        }
      }
    }
  }
  Volume out;
  out.dims = dims;
  out.values = std::move(values);
  if (any_invalid) out.mask = std::move(mask);
  out.value_range = compute_value_range(out.values, out.mask);
  return out;
}

double block_entropy(const DataBlock& block, const BlockSpec& spec, int bins, ValueRange range) {
  if (bins < 2) throw Error(ErrorCode::kInvalidArgument, "entropy needs at least 2 bins");
  if (!(range.vmin < range.vmax)) throw Error(ErrorCode::kInvalidArgument, "empty histogram range");
  const int edge = block.edge;
  std::vector<std::size_t> hist(bins, 0);
  std::size_t total = 0;
  for (int z = 0; z < block.valid_extent[2]; ++z) {
    for (int y = 0; y < block.valid_extent[1]; ++y) {
      for (int x = 0; x < block.valid_extent[0]; ++x) {
        const auto idx = linear_index({edge, edge, edge}, x + spec.pad, y + spec.pad, z + spec.pad);
        if (!block.mask.empty() && block.mask[idx] == 0) continue;
        const double u = (std::clamp(block.values[idx], range.vmin, range.vmax) - range.vmin) /
                         (range.vmax - range.vmin);
        const int bin = std::min(bins - 1, static_cast<int>(u * bins));
        ++hist[bin];
        ++total;
      }
    }
  }
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

TrainingSample sample_training_blocks(std::span<const DataBlock> blocks, int n,
                                      std::pair<int, int> ratio_high_low, int bins,
                                      std::uint64_t seed, const BlockSpec& spec) {
  if (n <= 0) throw Error(ErrorCode::kInvalidArgument, "sample size must be positive");
  if (static_cast<std::size_t>(n) > blocks.size()) {
    throw Error(ErrorCode::kInvalidArgument, "requested " + std::to_string(n) +
                                                 " blocks but only " +
                                                 std::to_string(blocks.size()) + " available");
  }
  const auto [rh, rl] = ratio_high_low;
  if (rh < 0 || rl < 0 || rh + rl == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sampling ratio must be non-negative and non-zero");
  }

  std::vector<double> entropy(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) entropy[i] = block_entropy(blocks[i], spec, bins);
  std::vector<double> sorted = entropy;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

  std::vector<std::size_t> high, low;
  for (std::size_t i = 0; i < blocks.size(); ++i) (entropy[i] > median ? high : low).push_back(i);

  std::mt19937_64 rng(seed);
  std::shuffle(high.begin(), high.end(), rng);
  std::shuffle(low.begin(), low.end(), rng);

  int want_high = static_cast<int>(std::lround(static_cast<double>(n) * rh / (rh + rl)));
  int want_low = n - want_high;
  TrainingSample out;
  if (want_high > static_cast<int>(high.size())) {
    want_low += want_high - static_cast<int>(high.size());
    want_high = static_cast<int>(high.size());
    out.backfilled = true;
  }
  if (want_low > static_cast<int>(low.size())) {
    want_high += want_low - static_cast<int>(low.size());
    want_low = static_cast<int>(low.size());
    out.backfilled = true;
  }
  if (out.backfilled) {
    spdlog::warn("training sample short on one entropy side; using {} high + {} low blocks",
                 want_high, want_low);
  }
  out.high_count = want_high;
  out.low_count = want_low;
  out.blocks.reserve(n);
  for (int i = 0; i < want_high; ++i) out.blocks.push_back(blocks[high[i]]);
  for (int i = 0; i < want_low; ++i) out.blocks.push_back(blocks[low[i]]);
  return out;
}

}  // namespace idlat
