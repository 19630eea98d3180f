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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "idlat/blocking.hpp"
#include "idlat/checkpoint.hpp"
#include "idlat/image.hpp"
#include "idlat/network.hpp"
#include "idlat/volume.hpp"

namespace idlat {

/// One flattened latent vector (dequantized integer symbols) per block.
struct LatentTable {
  int row_length = 0;
  std::vector<BlockIndex> blocks;
  std::vector<std::vector<double>> rows;
  std::string model_hash;   // hex
  std::string importance;   // free-form descriptor of the importance map

  std::size_t size() const { return rows.size(); }
  /// Uniform row length and unique block indices.
  void validate() const;
};

LatentTable make_latent_table(const std::vector<LatentBlock>& latents, const ModelHash& hash,
                              std::string importance_descriptor);

/// Sidecar file: "IDLL" | u8 version | u32 row length | u32 count |
/// u32 provenance length | provenance JSON | rows of (3 x i32 block index,
/// row length x f64). Little-endian.
std::vector<std::uint8_t> serialize(const LatentTable& t);
LatentTable parse_latent_table(std::span<const std::uint8_t> bytes);
void save_latent_table(const LatentTable& t, const std::filesystem::path& path);
LatentTable load_latent_table(const std::filesystem::path& path);

/// Spectral clustering (normalized affinity, k leading eigenvectors, k-means
/// with k-means++ seeding and 10 restarts) on a Gaussian affinity whose
/// bandwidth is the median pairwise distance. Labels are numbered in order of
/// first appearance. Throws kInvalidArgument when k < 2 or k > rows and
/// kDegenerateAffinity when all rows coincide.
std::vector<int> spectral_cluster(const std::vector<std::vector<double>>& rows, int k, std::uint64_t seed);
std::vector<int> cluster(const LatentTable& table, int k, std::uint64_t seed);

struct ClusterNode {
  int id = 0;
  int parent = -1;
  std::vector<int> members;  // row indices into the LatentTable, ascending
  std::vector<int> children;
  friend bool operator==(const ClusterNode&, const ClusterNode&) = default;
};

/// Hierarchy of clusters over table rows. Node 0 is the root and covers every
/// row; the children of a node partition its members.
class ClusterTree {
 public:
  ClusterTree() = default;
  explicit ClusterTree(std::size_t rows);

  const std::vector<ClusterNode>& nodes() const { return nodes_; }
  const ClusterNode& node(int id) const;
  bool contains(int id) const;
  std::vector<int> leaves() const;
  /// Leaf id of every row.
  std::vector<int> leaf_of_rows() const;
  void validate() const;

  /// Replaces leaf `id` by k children from spectral clustering of its
  /// members. kNotFound for an unknown node, kInvalidArgument when the node
  /// is not a leaf or has fewer than k members.
  ClusterTree split(const LatentTable& table, int id, int k, std::uint64_t seed) const;
  /// Removes every descendant of `id`, making it a leaf again.
  ClusterTree merge(int id) const;

  nlohmann::json to_json() const;
  friend bool operator==(const ClusterTree&, const ClusterTree&) = default;

 private:
  std::size_t position(int id) const;
  std::vector<ClusterNode> nodes_;  // ordered by id
};

struct Embedding2D {
  std::vector<std::array<double, 2>> points;
  double perplexity = 0.0;
  std::uint64_t seed = 0;
};

/// Exact t-SNE (Gaussian input affinities calibrated to `perplexity`,
/// Student-t output kernel, early exaggeration). Identical rows share one
/// embedded point. Throws kInvalidArgument for fewer than 3 rows or
/// perplexity outside (0, rows).
Embedding2D project_2d(const std::vector<std::vector<double>>& rows, double perplexity, std::uint64_t seed,
                       int iterations = 1000);
Embedding2D project_2d(const LatentTable& table, double perplexity, std::uint64_t seed, int iterations = 1000);

/// Latent representation of one isosurface: the volume is encoded under the
/// surface-band importance map of `isovalue` and all block latents are
/// concatenated in grid order. `spec` defaults to the model's block spec and
/// must match the model's padded edge. Throws kInvalidArgument when the
/// isovalue lies outside the volume's value range.
std::vector<double> isosurface_repr(const Volume& v, double isovalue, const Model& model,
                                    std::optional<BlockSpec> spec = {});

/// u.v / (|u| |v|). Throws kZeroNorm when either vector is zero.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct SimilarityMap {
  std::vector<double> isovalues;              // ascending
  std::vector<std::vector<double>> matrix;    // symmetric, unit diagonal
};

/// Pairwise cosine similarities of representations, reordered by ascending
/// isovalue. A zero representation raises kZeroNorm naming its isovalue.
SimilarityMap similarity_from_reprs(std::vector<double> isovalues, std::vector<std::vector<double>> reprs);
SimilarityMap similarity_map(const Volume& v, const std::vector<double>& isovalues, const Model& model,
                             std::optional<BlockSpec> spec = {});

/// Greedy selection: the first pick maximizes total similarity to all other
/// isovalues; every later pick maximizes its minimum dissimilarity to the
/// picks so far. Ties go to the smaller isovalue. Returned ascending.
std::vector<double> select_representatives(const SimilarityMap& map, int n);

std::string to_csv(const SimilarityMap& map);
/// Heatmap with `cell` pixels per entry, similarity -1 blue to +1 red.
Image heatmap(const SimilarityMap& map, int cell = 8);

/// Distribution of x-gradients (central differences, one-sided at the
/// border) over the content voxels of each leaf's blocks: a histogram with
/// `bins` bins over the global gradient range and a Gaussian kernel density
/// (Scott bandwidth) sampled at the bin centres.
struct GradientDistribution {
  int node = 0;
  std::size_t voxels = 0;
  std::vector<double> centers;
  std::vector<std::size_t> counts;
  std::vector<double> density;
};

std::vector<GradientDistribution> gradient_report(const Volume& v, const LatentTable& table, const BlockSpec& spec,
                                                  const ClusterTree& tree, int bins = 40);
nlohmann::json to_json(const std::vector<GradientDistribution>& report);

/// "start:stop:step", stop included when it lies on the grid.
std::vector<double> parse_isovalue_range(const std::string& text);

}  // namespace idlat
