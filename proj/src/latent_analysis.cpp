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

#include "idlat/latent_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "idlat/binary_io.hpp"
#include "idlat/error.hpp"
#include "idlat/parallel.hpp"

namespace idlat {
namespace {

constexpr char kTableMagic[4] = {'I', 'D', 'L', 'L'};
constexpr std::uint8_t kTableVersion = 1;

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != d) {
      throw Error(ErrorCode::kShapeMismatch, "rows have different lengths");
    }
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2.0;
  }
  return m;
}

struct KMeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
};

KMeansResult kmeans_once(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = x.row(pick(rng));
  Eigen::VectorXd best = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) best(i) = std::min(best(i), (x.row(i) - centers.row(c - 1)).squaredNorm());
    const double total = best.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (chosen = 0; chosen + 1 < n; ++chosen) {
        r -= best(chosen);
        if (r < 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = x.row(chosen);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    Eigen::VectorXd dist(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      int arg = 0;
      double dmin = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = (x.row(i) - centers.row(c)).squaredNorm();
        if (dd < dmin) {
          dmin = dd;
          arg = c;
        }
      }
      dist(i) = dmin;
      if (labels[static_cast<std::size_t>(i)] != arg) changed = true;
      labels[static_cast<std::size_t>(i)] = arg;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centre.
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      centers.row(c) = x.row(far);
      dist(far) = 0.0;
      changed = true;
    }
    if (!changed) break;
  }
  KMeansResult r;
  r.labels = std::move(labels);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.inertia += (x.row(i) - centers.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return r;
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

NormalizationParams stored_normalization(const Model& model) {
  NormalizationParams p;
  p.vmin = static_cast<float>(model.normalization.vmin);
  p.vmax = static_cast<float>(model.normalization.vmax);
  return p;
}

std::string format_value(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void LatentTable::validate() const {
  if (row_length < 0) throw Error(ErrorCode::kInvalidArgument, "negative row length");
  if (blocks.size() != rows.size()) {
    throw Error(ErrorCode::kShapeMismatch, "latent table has " + std::to_string(rows.size()) + " rows but " +
                                               std::to_string(blocks.size()) + " block indices");
  }
  std::set<BlockIndex> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != row_length) {
      throw Error(ErrorCode::kShapeMismatch, "row " + std::to_string(i) + " has length " +
                                                 std::to_string(rows[i].size()) + ", expected " +
                                                 std::to_string(row_length));
    }
    if (!seen.insert(blocks[i]).second) {
      throw Error(ErrorCode::kDuplicateBlock, "block " + to_string(blocks[i]) + " appears twice");
    }
  }
}

LatentTable make_latent_table(const std::vector<LatentBlock>& latents, const ModelHash& hash,
                              std::string importance_descriptor) {
  LatentTable t;
  t.model_hash = to_hex(hash);
  t.importance = std::move(importance_descriptor);
  t.row_length = latents.empty() ? 0 : static_cast<int>(latents.front().y_symbols.size());
  for (const auto& lb : latents) {
    t.blocks.push_back(lb.index);
    t.rows.emplace_back(lb.y_symbols.begin(), lb.y_symbols.end());
  }
  t.validate();
  return t;
}

std::vector<std::uint8_t> serialize(const LatentTable& t) {
  t.validate();
  std::vector<std::uint8_t> out;
  bin::put_bytes(out, std::span(reinterpret_cast<const std::uint8_t*>(kTableMagic), 4));
  bin::put<std::uint8_t>(out, kTableVersion);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.row_length));
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows.size()));
  const std::string prov = nlohmann::json{{"model_hash", t.model_hash}, {"importance", t.importance}}.dump();
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(prov.size()));
  bin::put_bytes(out, std::span(reinterpret_cast<const std::uint8_t*>(prov.data()), prov.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    bin::put<std::int32_t>(out, t.blocks[i].bi);
    bin::put<std::int32_t>(out, t.blocks[i].bj);
    bin::put<std::int32_t>(out, t.blocks[i].bk);
    for (double v : t.rows[i]) bin::put<double>(out, v);
  }
  return out;
}

LatentTable parse_latent_table(std::span<const std::uint8_t> bytes) {
  bin::Reader r(bytes);
  const auto magic = r.bytes(4, "latent table magic");
  if (!std::equal(magic.begin(), magic.end(), kTableMagic)) {
    throw Error(ErrorCode::kFormat, "not a latent table (bad magic)");
  }
  const auto version = r.get<std::uint8_t>("latent table version");
  if (version != kTableVersion) {
    throw Error(ErrorCode::kFormat, "unsupported latent table version " + std::to_string(version));
  }
  LatentTable t;
  t.row_length = static_cast<int>(r.get<std::uint32_t>("row length"));
  const auto count = r.get<std::uint32_t>("row count");
  const auto prov_len = r.get<std::uint32_t>("provenance length");
  const auto prov_bytes = r.bytes(prov_len, "provenance");
  try {
    const auto prov = nlohmann::json::parse(prov_bytes.begin(), prov_bytes.end());
    t.model_hash = prov.at("model_hash").get<std::string>();
    t.importance = prov.at("importance").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("latent table provenance: ") + e.what());
  }
  const std::size_t row_bytes = 12 + 8 * static_cast<std::size_t>(t.row_length);
  if (r.remaining() != row_bytes * count) {
    throw Error(r.remaining() < row_bytes * count ? ErrorCode::kTruncated : ErrorCode::kFormat,
                "latent table body has " + std::to_string(r.remaining()) + " bytes, expected " +
                    std::to_string(row_bytes * count));
  }
  t.rows.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    BlockIndex b;
    b.bi = r.get<std::int32_t>("block index");
    b.bj = r.get<std::int32_t>("block index");
    b.bk = r.get<std::int32_t>("block index");
    t.blocks.push_back(b);
    std::vector<double> row(static_cast<std::size_t>(t.row_length));
    for (auto& v : row) v = r.get<double>("latent value");
    t.rows.push_back(std::move(row));
  }
  t.validate();
  return t;
}

void save_latent_table(const LatentTable& t, const std::filesystem::path& path) {
  bin::write_file(path.string(), serialize(t));
}

LatentTable load_latent_table(const std::filesystem::path& path) {
  return parse_latent_table(bin::read_file(path.string()));
}

std::vector<int> spectral_cluster(const std::vector<std::vector<double>>& rows, int k, std::uint64_t seed) {
  const int n = static_cast<int>(rows.size());
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "k must be >= 2, got " + std::to_string(k));
  if (k > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " members");
  }
  const Eigen::MatrixXd x = to_matrix(rows);
  const Eigen::MatrixXd d2 = squared_distances(x);

  std::vector<double> pair_dist, positive;
  pair_dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      pair_dist.push_back(std::sqrt(d2(i, j)));
      if (pair_dist.back() > 0.0) positive.push_back(pair_dist.back());
    }
  }
  if (positive.empty()) throw Error(ErrorCode::kDegenerateAffinity, "all latent vectors are identical");
  double sigma = median(pair_dist);
  // More than half the pairs coincide: fall back to the positive distances.
  if (sigma <= 0.0) sigma = median(positive);

  Eigen::MatrixXd w = (-d2 / (2.0 * sigma * sigma)).array().exp().matrix();
  w.diagonal().setZero();
  Eigen::VectorXd deg = w.rowwise().sum();
  for (int i = 0; i < n; ++i) {
    if (!(deg(i) > std::numeric_limits<double>::min())) {
      throw Error(ErrorCode::kDegenerateAffinity, "row " + std::to_string(i) + " has no affinity to any other");
    }
  }
  const Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
  const Eigen::MatrixXd m = inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::kDegenerateAffinity, "eigendecomposition failed");
  Eigen::MatrixXd u = eig.eigenvectors().rightCols(k);
  for (int i = 0; i < n; ++i) {
    const double norm = u.row(i).norm();
    if (norm > 0.0) u.row(i) /= norm;
  }

  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < 10; ++restart) {
    KMeansResult r = kmeans_once(u, k, rng);
    if (r.inertia < best.inertia - 1e-12) best = std::move(r);
  }
  return canonical_labels(best.labels);
}

std::vector<int> cluster(const LatentTable& table, int k, std::uint64_t seed) {
  return spectral_cluster(table.rows, k, seed);
}

ClusterTree::ClusterTree(std::size_t rows) {
  ClusterNode root;
  root.members.resize(rows);
  std::iota(root.members.begin(), root.members.end(), 0);
  nodes_.push_back(std::move(root));
}

std::size_t ClusterTree::position(int id) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                             [](const ClusterNode& n, int v) { return n.id < v; });
  if (it == nodes_.end() || it->id != id) {
    throw Error(ErrorCode::kNotFound, "no cluster node " + std::to_string(id));
  }
  return static_cast<std::size_t>(it - nodes_.begin());
}

const ClusterNode& ClusterTree::node(int id) const { return nodes_[position(id)]; }

bool ClusterTree::contains(int id) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [id](const ClusterNode& n) { return n.id == id; });
}

std::vector<int> ClusterTree::leaves() const {
  std::vector<int> out;
  for (const auto& n : nodes_) {
    if (n.children.empty()) out.push_back(n.id);
  }
  return out;
}

std::vector<int> ClusterTree::leaf_of_rows() const {
  if (nodes_.empty()) return {};
  std::vector<int> out(nodes_.front().members.size(), -1);
  for (int id : leaves()) {
    for (int m : node(id).members) out[static_cast<std::size_t>(m)] = id;
  }
  return out;
}

void ClusterTree::validate() const {
  if (nodes_.empty()) return;
  if (nodes_.front().id != 0 || nodes_.front().parent != -1) {
    throw Error(ErrorCode::kFormat, "cluster tree must start with root node 0");
  }
  for (const auto& n : nodes_) {
    if (n.children.empty()) continue;
    std::vector<int> merged;
    for (int c : n.children) {
      const auto& child = node(c);
      if (child.parent != n.id) throw Error(ErrorCode::kFormat, "node " + std::to_string(c) + " has wrong parent");
      merged.insert(merged.end(), child.members.begin(), child.members.end());
    }
    std::sort(merged.begin(), merged.end());
    if (merged != n.members) {
      throw Error(ErrorCode::kFormat, "children of node " + std::to_string(n.id) + " do not partition it");
    }
  }
}

ClusterTree ClusterTree::split(const LatentTable& table, int id, int k, std::uint64_t seed) const {
  const ClusterNode& target = node(id);
  if (!target.children.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "node " + std::to_string(id) + " is already split");
  }
  if (!nodes_.empty() && nodes_.front().members.size() != table.size()) {
    throw Error(ErrorCode::kShapeMismatch, "tree covers " + std::to_string(nodes_.front().members.size()) +
                                               " rows, table has " + std::to_string(table.size()));
  }
  if (k > static_cast<int>(target.members.size())) {
    throw Error(ErrorCode::kInvalidArgument, "k = " + std::to_string(k) + " exceeds the " +
                                                 std::to_string(target.members.size()) + " members of node " +
                                                 std::to_string(id));
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(target.members.size());
  for (int m : target.members) rows.push_back(table.rows[static_cast<std::size_t>(m)]);
  const auto labels = spectral_cluster(rows, k, seed);

  ClusterTree out = *this;
  int next = nodes_.back().id + 1;
  std::vector<ClusterNode> children(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    children[static_cast<std::size_t>(c)].id = next + c;
    children[static_cast<std::size_t>(c)].parent = id;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    children[static_cast<std::size_t>(labels[i])].members.push_back(target.members[i]);
  }
  const std::size_t at = position(id);
  for (auto& c : children) {
    if (c.members.empty()) continue;
    out.nodes_[at].children.push_back(c.id);
    out.nodes_.push_back(std::move(c));
  }
  return out;
}

ClusterTree ClusterTree::merge(int id) const {
  position(id);
  std::set<int> doomed;
  std::vector<int> stack(node(id).children);
  while (!stack.empty()) {
    const int c = stack.back();
    stack.pop_back();
    doomed.insert(c);
    const auto& ch = node(c).children;
    stack.insert(stack.end(), ch.begin(), ch.end());
  }
  ClusterTree out;
  for (const auto& n : nodes_) {
    if (!doomed.count(n.id)) out.nodes_.push_back(n);
  }
  out.nodes_[out.position(id)].children.clear();
  return out;
}

nlohmann::json ClusterTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nodes.push_back({{"id", n.id},
                     {"parent", n.parent < 0 ? nlohmann::json(nullptr) : nlohmann::json(n.parent)},
                     {"children", n.children},
                     {"members", n.members},
                     {"size", n.members.size()}});
  }
  return {{"root", 0}, {"nodes", std::move(nodes)}};
}

Embedding2D project_2d(const std::vector<std::vector<double>>& rows, double perplexity, std::uint64_t seed,
                       int iterations) {
  const int n_all = static_cast<int>(rows.size());
  if (n_all < 3) throw Error(ErrorCode::kInvalidArgument, "projection needs at least 3 rows");
  if (!(perplexity > 0.0) || perplexity >= n_all) {
    throw Error(ErrorCode::kInvalidArgument, "perplexity must lie in (0, " + std::to_string(n_all) + ")");
  }
  if (iterations < 1) throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 1");

  // Identical rows are embedded once and share the resulting point.
  std::map<std::vector<double>, int> unique_of;
  std::vector<int> slot(rows.size());
  std::vector<std::vector<double>> unique_rows;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto [it, inserted] = unique_of.try_emplace(rows[i], static_cast<int>(unique_rows.size()));
    if (inserted) unique_rows.push_back(rows[i]);
    slot[i] = it->second;
  }
  const int n = static_cast<int>(unique_rows.size());
  Embedding2D out;
  out.perplexity = perplexity;
  out.seed = seed;
  if (n == 1) {
    out.points.assign(rows.size(), {0.0, 0.0});
    return out;
  }

  const Eigen::MatrixXd d2 = squared_distances(to_matrix(unique_rows));
  const double target = std::log(std::min(perplexity, static_cast<double>(n - 1)));
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double dmin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d2(i, j));
    for (int it = 0; it < 200; ++it) {
      double sum = 0.0, weighted = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double e = std::exp(-beta * (d2(i, j) - dmin));
        p(i, j) = e;
        sum += e;
        weighted += e * (d2(i, j) - dmin);
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      p.row(i) /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
  }
  p = ((p + p.transpose()) / (2.0 * n)).eval();
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1e-4);
  Eigen::MatrixXd y(n, 2), update = Eigen::MatrixXd::Zero(n, 2), gains = Eigen::MatrixXd::Ones(n, 2);
  for (int i = 0; i < n; ++i) {
    y(i, 0) = nd(rng);
    y(i, 1) = nd(rng);
  }
  // Learning rate max(n / 48, 50): a fixed 200 oscillates on small inputs.
  const double lr = std::max(static_cast<double>(n) / 48.0, 50.0);
  const int exaggeration_iters = std::min(250, iterations);
  Eigen::MatrixXd num(n, n), grad(n, 2);
  for (int it = 0; it < iterations; ++it) {
    const double exaggeration = it < exaggeration_iters ? 12.0 : 1.0;
    const double momentum = it < exaggeration_iters ? 0.5 : 0.8;
    for (int i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (int j = i + 1; j < n; ++j) {
        const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = v;
        num(j, i) = v;
      }
    }
    const double qsum = num.sum();
    grad.setZero();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num(i, j) / qsum, 1e-12);
        grad.row(i) += 4.0 * (exaggeration * p(i, j) - q) * num(i, j) * (y.row(i) - y.row(j));
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        const bool same_sign = (grad(i, c) > 0.0) == (update(i, c) > 0.0);
        gains(i, c) = std::max(same_sign ? gains(i, c) * 0.8 : gains(i, c) + 0.2, 0.01);
        update(i, c) = momentum * update(i, c) - lr * gains(i, c) * grad(i, c);
      }
    }
    y += update;
    y.rowwise() -= y.colwise().mean();
  }
  out.points.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.points[i] = {y(slot[i], 0), y(slot[i], 1)};
  return out;
}

Embedding2D project_2d(const LatentTable& table, double perplexity, std::uint64_t seed, int iterations) {
  return project_2d(table.rows, perplexity, seed, iterations);
}

std::vector<double> isosurface_repr(const Volume& v, double isovalue, const Model& model,
                                    std::optional<BlockSpec> spec) {
  const BlockSpec s = spec.value_or(model.block_spec);
  s.validate();
  if (s.padded_edge() != model.config().padded_edge) {
    throw Error(ErrorCode::kInvalidArgument, "block spec padded edge " + std::to_string(s.padded_edge()) +
                                                 " does not match the model's " +
                                                 std::to_string(model.config().padded_edge));
  }
  if (!(isovalue >= v.value_range.vmin && isovalue <= v.value_range.vmax)) {
    throw Error(ErrorCode::kInvalidArgument, "isovalue " + format_value(isovalue) + " lies outside [" +
                                                 format_value(v.value_range.vmin) + ", " +
                                                 format_value(v.value_range.vmax) + "]");
  }
  const ImportanceMap band = isosurface_band_map(v, isovalue);
  const Volume normalized = normalize_with(v, stored_normalization(model));
  const auto blocks = partition(normalized, band, s);
  const std::size_t per = nn::shape_size(model.latent_shape());
  std::vector<double> out(blocks.size() * per);
  parallel_for(blocks.size(), [&](std::size_t b) {
    const auto symbols = model.compress_block(blocks[b]).y_symbols;
    std::copy(symbols.begin(), symbols.end(), out.begin() + static_cast<std::ptrdiff_t>(b * per));
  });
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::kShapeMismatch, "vectors of length " + std::to_string(u.size()) + " and " +
                                               std::to_string(v.size()));
  }
  long double dot = 0.0L, nu = 0.0L, nv = 0.0L;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<long double>(u[i]) * v[i];
    nu += static_cast<long double>(u[i]) * u[i];
    nv += static_cast<long double>(v[i]) * v[i];
  }
  if (nu == 0.0L || nv == 0.0L) throw Error(ErrorCode::kZeroNorm, "cosine similarity of a zero vector");
  const long double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return static_cast<double>(std::clamp(c, -1.0L, 1.0L));
}

SimilarityMap similarity_from_reprs(std::vector<double> isovalues, std::vector<std::vector<double>> reprs) {
  if (isovalues.size() != reprs.size()) {
    throw Error(ErrorCode::kShapeMismatch, "isovalue and representation counts differ");
  }
  if (isovalues.empty()) throw Error(ErrorCode::kInvalidArgument, "no isovalues");
  std::vector<std::size_t> order(isovalues.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return isovalues[a] < isovalues[b]; });
  SimilarityMap m;
  std::vector<std::vector<double>> sorted;
  for (auto i : order) {
    m.isovalues.push_back(isovalues[i]);
    sorted.push_back(std::move(reprs[i]));
  }
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (std::all_of(sorted[i].begin(), sorted[i].end(), [](double x) { return x == 0.0; })) {
      throw Error(ErrorCode::kZeroNorm, "representation of isovalue " + format_value(m.isovalues[i]) +
                                            " is the zero vector");
    }
  }
  const std::size_t n = sorted.size();
  m.matrix.assign(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = cosine_similarity(sorted[i], sorted[j]);
      m.matrix[i][j] = c;
      m.matrix[j][i] = c;
    }
  }
  return m;
}

SimilarityMap similarity_map(const Volume& v, const std::vector<double>& isovalues, const Model& model,
                             std::optional<BlockSpec> spec) {
  std::vector<std::vector<double>> reprs;
  reprs.reserve(isovalues.size());
  for (double iso : isovalues) reprs.push_back(isosurface_repr(v, iso, model, spec));
  return similarity_from_reprs(isovalues, std::move(reprs));
}

std::vector<double> select_representatives(const SimilarityMap& map, int n) {
  const int count = static_cast<int>(map.isovalues.size());
  if (n <= 0 || n > count) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot select " + std::to_string(n) + " of " + std::to_string(count) + " isovalues");
  }
  std::vector<bool> picked(static_cast<std::size_t>(count), false);
  std::vector<int> chosen;
  // Isovalues are ascending, so a strict comparison keeps ties on the smaller one.
  int first = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) {
    double total = 0.0;
    for (int j = 0; j < count; ++j)
      if (j != i) total += map.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    if (total > best) {
      best = total;
      first = i;
    }
  }
  chosen.push_back(first);
  picked[static_cast<std::size_t>(first)] = true;
  while (static_cast<int>(chosen.size()) < n) {
    int arg = -1;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < count; ++i) {
      if (picked[static_cast<std::size_t>(i)]) continue;
      double min_dis = std::numeric_limits<double>::infinity();
      for (int c : chosen) {
        min_dis = std::min(min_dis, 1.0 - map.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
      }
      if (min_dis > best_min) {
        best_min = min_dis;
        arg = i;
      }
    }
    chosen.push_back(arg);
    picked[static_cast<std::size_t>(arg)] = true;
  }
  std::vector<double> out;
  for (int c : chosen) out.push_back(map.isovalues[static_cast<std::size_t>(c)]);
  std::sort(out.begin(), out.end());
  return out;
}

std::string to_csv(const SimilarityMap& map) {
  std::ostringstream os;
  os.precision(17);
  os << "isovalue";
  for (double v : map.isovalues) os << ',' << v;
  os << '\n';
  for (std::size_t i = 0; i < map.isovalues.size(); ++i) {
    os << map.isovalues[i];
    for (double s : map.matrix[i]) os << ',' << s;
    os << '\n';
  }
  return os.str();
}

Image heatmap(const SimilarityMap& map, int cell) {
  if (cell < 1) throw Error(ErrorCode::kInvalidArgument, "heatmap cell size must be >= 1");
  const int n = static_cast<int>(map.isovalues.size());
  Image img(n * cell, n * cell, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double s = map.matrix[static_cast<std::size_t>(y / cell)][static_cast<std::size_t>(x / cell)];
      const auto c = diverging_color((s + 1.0) / 2.0);
      for (int ch = 0; ch < 3; ++ch) img.at(x, y)[ch] = c[static_cast<std::size_t>(ch)];
    }
  }
  return img;
}

std::vector<GradientDistribution> gradient_report(const Volume& v, const LatentTable& table, const BlockSpec& spec,
                                                  const ClusterTree& tree, int bins) {
  if (bins < 1) throw Error(ErrorCode::kInvalidArgument, "bins must be >= 1");
  if (!tree.nodes().empty() && tree.node(0).members.size() != table.size()) {
    throw Error(ErrorCode::kShapeMismatch, "tree does not cover the latent table");
  }
  const Dims& d = v.dims;
  auto grad_x = [&](int i, int j, int k) -> std::optional<double> {
    const int lo = std::max(i - 1, 0), hi = std::min(i + 1, d.nx - 1);
    if (lo == hi) return std::nullopt;
    const std::size_t a = linear_index(d, lo, j, k), b = linear_index(d, hi, j, k);
    if (!v.valid(a) || !v.valid(b)) return std::nullopt;
    return (v.values[b] - v.values[a]) / (hi - lo);
  };
  const int c = spec.content;
  std::vector<std::vector<double>> samples;
  const auto leaves = tree.leaves();
  double gmin = std::numeric_limits<double>::infinity(), gmax = -gmin;
  for (int leaf : leaves) {
    std::vector<double> g;
    for (int m : tree.node(leaf).members) {
      const BlockIndex& b = table.blocks[static_cast<std::size_t>(m)];
      for (int k = b.bk * c; k < std::min((b.bk + 1) * c, d.nz); ++k)
        for (int j = b.bj * c; j < std::min((b.bj + 1) * c, d.ny); ++j)
          for (int i = b.bi * c; i < std::min((b.bi + 1) * c, d.nx); ++i) {
            if (!v.valid(linear_index(d, i, j, k))) continue;
            if (const auto gx = grad_x(i, j, k)) {
              g.push_back(*gx);
              gmin = std::min(gmin, *gx);
              gmax = std::max(gmax, *gx);
            }
          }
    }
    samples.push_back(std::move(g));
  }
  if (!(gmin <= gmax)) gmin = gmax = 0.0;
  if (gmax == gmin) {
    gmin -= 0.5;
    gmax += 0.5;
  }
  const double width = (gmax - gmin) / bins;
  std::vector<GradientDistribution> out;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    GradientDistribution r;
    r.node = leaves[l];
    const auto& g = samples[l];
    r.voxels = g.size();
    r.counts.assign(static_cast<std::size_t>(bins), 0);
    r.density.assign(static_cast<std::size_t>(bins), 0.0);
    for (int b = 0; b < bins; ++b) r.centers.push_back(gmin + (b + 0.5) * width);
    for (double x : g) {
      const int b = std::clamp(static_cast<int>((x - gmin) / width), 0, bins - 1);
      ++r.counts[static_cast<std::size_t>(b)];
    }
    if (g.size() >= 2) {
      const double mean = std::accumulate(g.begin(), g.end(), 0.0) / g.size();
      double var = 0.0;
      for (double x : g) var += (x - mean) * (x - mean);
      const double sd = std::sqrt(var / (g.size() - 1));
      const double h = sd > 0.0 ? 1.06 * sd * std::pow(static_cast<double>(g.size()), -0.2) : width;
      const double norm = 1.0 / (static_cast<double>(g.size()) * h * std::sqrt(2.0 * M_PI));
      for (int b = 0; b < bins; ++b) {
        double s = 0.0;
        for (double x : g) {
          const double t = (r.centers[static_cast<std::size_t>(b)] - x) / h;
          s += std::exp(-0.5 * t * t);
        }
        r.density[static_cast<std::size_t>(b)] = s * norm;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_json(const std::vector<GradientDistribution>& report) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& r : report) {
    clusters.push_back({{"node", r.node},
                        {"voxels", r.voxels},
                        {"centers", r.centers},
                        {"counts", r.counts},
                        {"density", r.density}});
  }
  return {{"clusters", std::move(clusters)}};
}

std::vector<double> parse_isovalue_range(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad isovalue range '" + text + "'");
    }
  }
  if (parts.size() != 3) throw Error(ErrorCode::kInvalidArgument, "isovalue range must be start:stop:step");
  const double start = parts[0], stop = parts[1], step = parts[2];
  if (!(step > 0.0) || !(stop >= start)) {
    throw Error(ErrorCode::kInvalidArgument, "isovalue range needs step > 0 and stop >= start");
  }
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  if (count > 1000000) throw Error(ErrorCode::kInvalidArgument, "isovalue range too long");
  for (long i = 0; i <= count; ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

}  // namespace idlat
