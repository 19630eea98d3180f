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

#include <algorithm>
#include <set>

#include "idlat/blocking.hpp"
#include "test_support.hpp"

namespace idlat {
namespace {

ImportanceMap ramp_importance(const Dims& d) {
  ImportanceMap m{d, std::vector<double>(d.count())};
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = double(i % 97) / 96.0;
  return m;
}

// A block whose content region holds `levels` equally frequent values.
DataBlock block_with_levels(int edge, int levels, int id) {
  DataBlock b;
  b.index = {id, 0, 0};
  b.edge = edge;
  b.values.resize(std::size_t(edge) * edge * edge);
  for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = (double(i % levels) + 0.5) / levels;
  b.importance.assign(b.values.size(), 0.0);
  b.mask.assign(b.values.size(), 1);
  b.valid_extent = {edge, edge, edge};
  return b;
}

TEST(Blocking, DefaultGeometry) {
  const Dims d{128, 128, 128};
  const BlockSpec spec{16, 4};
  EXPECT_EQ(spec.grid_dims(d), (Dims{8, 8, 8}));
  EXPECT_EQ(spec.padded_edge(), 24);
}

TEST(Blocking, SingleBlockWithoutPadIsTheVolume) {
  const Volume v = testing::blob_volume({16, 16, 16}, 1);
  const auto blocks = partition(v, ramp_importance(v.dims), {16, 0});
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].values, v.values);
}

TEST(Blocking, NonDivisibleDimsClipLastBlock) {
  const Volume v = testing::blob_volume({20, 20, 20}, 2);
  const BlockSpec spec{16, 2};
  const auto blocks = partition(v, ramp_importance(v.dims), spec);
  ASSERT_EQ(blocks.size(), 8u);
  for (const auto& b : blocks) {
    for (int a = 0; a < 3; ++a) {
      const int idx = a == 0 ? b.index.bi : a == 1 ? b.index.bj : b.index.bk;
      EXPECT_EQ(b.valid_extent[a], idx == 0 ? 16 : 4);
    }
  }
  const Volume back = reassemble(blocks, spec, v.dims);
  EXPECT_EQ(back.values, v.values);
}

TEST(Blocking, PaddingReadsNeighboursAndReplicatesAtBorder) {
  const Volume v = testing::blob_volume({8, 8, 8}, 3);
  const BlockSpec spec{4, 2};
  const auto blocks = partition(v, ramp_importance(v.dims), spec);
  const int e = spec.padded_edge();
  const auto& b = blocks[grid_linear_index(spec.grid_dims(v.dims), {1, 0, 0})];
  // Block origin in the domain is (4 - 2, -2, -2).
  for (int z = 0; z < e; ++z)
    for (int y = 0; y < e; ++y)
      for (int x = 0; x < e; ++x) {
        const int i = std::clamp(2 + x, 0, 7), j = std::clamp(y - 2, 0, 7), k = std::clamp(z - 2, 0, 7);
        ASSERT_EQ(b.values[linear_index({e, e, e}, x, y, z)], v.at(i, j, k));
      }
}

TEST(Blocking, RoundTripOnRandomSpecs) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const BlockSpec spec{4 + int(rng() % 5), int(rng() % 4)};
    const Dims d{spec.content + int(rng() % 11), spec.content + int(rng() % 11), spec.content + int(rng() % 11)};
    const auto t = testing::random_tensor({int(d.count())}, rng);
    const Volume v = make_volume(d, t.data);
    auto blocks = partition(v, ramp_importance(d), spec);
    EXPECT_EQ(blocks.size(), spec.grid_dims(d).count());
    std::shuffle(blocks.begin(), blocks.end(), rng);
    const Volume back = reassemble(blocks, spec, d);
    ASSERT_EQ(back.values, v.values) << "trial " << trial;
  }
}

TEST(Blocking, EveryContentVoxelBelongsToExactlyOneBlock) {
  const Dims d{13, 9, 11};
  const BlockSpec spec{4, 1};
  const auto grid = spec.grid_dims(d);
  std::vector<int> hits(d.count(), 0);
  for (int bk = 0; bk < grid.nz; ++bk)
    for (int bj = 0; bj < grid.ny; ++bj)
      for (int bi = 0; bi < grid.nx; ++bi)
        for (int z = 0; z < spec.content; ++z)
          for (int y = 0; y < spec.content; ++y)
            for (int x = 0; x < spec.content; ++x) {
              const int i = bi * 4 + x, j = bj * 4 + y, k = bk * 4 + z;
              if (i < d.nx && j < d.ny && k < d.nz) ++hits[linear_index(d, i, j, k)];
            }
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Blocking, MaskSurvivesRoundTrip) {
  Volume v = testing::blob_volume({9, 9, 9}, 8);
  v.values[17] = -1.0;
  v = apply_sentinel_mask(v, -1.0);
  const BlockSpec spec{4, 1};
  const Volume back = reassemble(partition(v, ramp_importance(v.dims), spec), spec, v.dims);
  EXPECT_EQ(back.mask, v.mask);
}

TEST(Blocking, MissingAndDuplicateBlocks) {
  const Volume v = testing::blob_volume({8, 8, 8}, 4);
  const BlockSpec spec{4, 1};
  auto blocks = partition(v, ramp_importance(v.dims), spec);
  auto missing = blocks;
  missing.erase(missing.begin() + 5);
  try {
    reassemble(missing, spec, v.dims);
    FAIL() << "expected missing-block error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingBlock);
    EXPECT_NE(std::string(e.what()).find("(1,0,1)"), std::string::npos) << e.what();
  }
  auto dup = blocks;
  dup.push_back(blocks[0]);
  EXPECT_IDLAT_ERROR(reassemble(dup, spec, v.dims), ErrorCode::kDuplicateBlock);
}

TEST(Blocking, TooSmallVolume) {
  const Volume v = testing::blob_volume({8, 8, 3}, 4);
  EXPECT_IDLAT_ERROR(partition(v, ramp_importance(v.dims), {4, 0}), ErrorCode::kInvalidArgument);
}

TEST(Blocking, ExtractedBlockMatchesPartition) {
  const Volume v = testing::blob_volume({13, 10, 9}, 4, 0.1);
  const auto imp = ramp_importance(v.dims);
  const BlockSpec spec{4, 2};
  for (const auto& b : partition(v, imp, spec)) {
    const DataBlock e = extract_block(v, imp, spec, {b.index.bi * 4, b.index.bj * 4, b.index.bk * 4});
    EXPECT_EQ(e.values, b.values);
    EXPECT_EQ(e.importance, b.importance);
    EXPECT_EQ(e.valid_extent, b.valid_extent);
  }
  EXPECT_IDLAT_ERROR(extract_block(v, imp, spec, {13, 0, 0}), ErrorCode::kInvalidArgument);
}

TEST(Blocking, RandomBlocksStayInsideAndAreSeeded) {
  const Volume v = testing::blob_volume({12, 9, 10}, 5);
  const auto imp = ramp_importance(v.dims);
  const BlockSpec spec{4, 1};
  const auto a = random_blocks(v, imp, spec, 40, 3);
  const auto b = random_blocks(v, imp, spec, 40, 3);
  ASSERT_EQ(a.size(), 40u);
  for (std::size_t n = 0; n < a.size(); ++n) {
    EXPECT_EQ(a[n].index.bi, static_cast<int>(n));
    EXPECT_EQ(a[n].values, b[n].values);
    EXPECT_EQ(a[n].valid_extent, (std::array<int, 3>{4, 4, 4}));
    // The content centre voxel is an actual volume value.
    const double c = a[n].values[linear_index({6, 6, 6}, 1, 1, 1)];
    EXPECT_NE(std::find(v.values.begin(), v.values.end(), c), v.values.end());
  }
  EXPECT_NE(random_blocks(v, imp, spec, 5, 4)[0].values, a[0].values);
  EXPECT_IDLAT_ERROR(random_blocks(v, imp, spec, -1, 3), ErrorCode::kInvalidArgument);
}

TEST(Blocking, EntropyValues) {
  const BlockSpec spec{4, 0};
  EXPECT_EQ(block_entropy(block_with_levels(4, 1, 0), spec, 16), 0.0);
  EXPECT_NEAR(block_entropy(block_with_levels(4, 2, 0), spec, 2), 1.0, 1e-12);
  EXPECT_NEAR(block_entropy(block_with_levels(4, 16, 0), spec, 16), 4.0, 1e-9);
  // Closed form for an uneven histogram: 3 of one value, 1 of another.
  DataBlock b = block_with_levels(4, 1, 0);
  for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = i % 4 == 0 ? 0.9 : 0.1;
  const double expect = -(0.75 * std::log2(0.75) + 0.25 * std::log2(0.25));
  EXPECT_NEAR(block_entropy(b, spec, 8), expect, 1e-12);
}

TEST(Blocking, EntropyIgnoresPadding) {
  const BlockSpec spec{4, 2};
  DataBlock b = block_with_levels(8, 1, 0);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const bool content = x >= 2 && x < 6 && y >= 2 && y < 6 && z >= 2 && z < 6;
        if (!content) b.values[linear_index({8, 8, 8}, x, y, z)] = double(x) / 8.0;
      }
  b.valid_extent = {4, 4, 4};
  EXPECT_EQ(block_entropy(b, spec, 16), 0.0);
}

TEST(Blocking, SamplingRatio) {
  std::vector<DataBlock> blocks;
  for (int i = 0; i < 2200; ++i) blocks.push_back(block_with_levels(4, i % 2 == 0 ? 8 : 1, i));
  const auto s = sample_training_blocks(blocks, 1100, {10, 1}, 16, 7, {4, 0});
  EXPECT_EQ(s.high_count, 1000);
  EXPECT_EQ(s.low_count, 100);
  EXPECT_FALSE(s.backfilled);
  std::set<int> ids;
  for (const auto& b : s.blocks) ids.insert(b.index.bi);
  EXPECT_EQ(ids.size(), 1100u);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(s.blocks[i].index.bi % 2, 0);
}

TEST(Blocking, SamplingIsDeterministicPerSeed) {
  std::vector<DataBlock> blocks;
  for (int i = 0; i < 40; ++i) blocks.push_back(block_with_levels(4, 4, i));
  auto ids = [&](std::uint64_t seed) {
    std::vector<int> out;
    for (const auto& b : sample_training_blocks(blocks, 12, {1, 1}, 16, seed, {4, 0}).blocks) out.push_back(b.index.bi);
    return out;
  };
  const auto first = ids(3);
  EXPECT_EQ(first, ids(3));
  EXPECT_EQ(first.size(), 12u);
  EXPECT_EQ(std::set<int>(first.begin(), first.end()).size(), 12u);
}

TEST(Blocking, SamplingBackfillsShortSide) {
  std::vector<DataBlock> blocks;
  for (int i = 0; i < 3; ++i) blocks.push_back(block_with_levels(4, 8, i));
  for (int i = 3; i < 23; ++i) blocks.push_back(block_with_levels(4, 1, i));
  const auto s = sample_training_blocks(blocks, 10, {10, 1}, 16, 1, {4, 0});
  EXPECT_EQ(s.high_count, 3);
  EXPECT_EQ(s.low_count, 7);
  EXPECT_TRUE(s.backfilled);
}

TEST(Blocking, SamplingRejectsBadCounts) {
  std::vector<DataBlock> blocks{block_with_levels(4, 2, 0)};
  EXPECT_IDLAT_ERROR(sample_training_blocks(blocks, 0, {1, 1}, 8, 0, {4, 0}), ErrorCode::kInvalidArgument);
  EXPECT_IDLAT_ERROR(sample_training_blocks(blocks, 2, {1, 1}, 8, 0, {4, 0}), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace idlat
