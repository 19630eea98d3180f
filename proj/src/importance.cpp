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

#include "idlat/importance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "idlat/error.hpp"

namespace idlat {
namespace {

constexpr double kFar = 1e20;

// Squared distance transform of a sampled function along one line
// (lower envelope of parabolas).
void distance_transform_1d(const std::vector<double>& f, std::vector<double>& d,
                           std::vector<int>& v, std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(f.size());
  auto intersect = [&](int q, int p) {
    return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
  };
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

void distance_transform_3d(std::vector<double>& grid, const Dims& dims) {
  const int extent[3] = {dims.nx, dims.ny, dims.nz};
  const int max_n = std::max({dims.nx, dims.ny, dims.nz});
  std::vector<double> f(max_n), d(max_n), z(max_n + 1);
  std::vector<int> v(max_n);
  for (int axis = 0; axis < 3; ++axis) {
    const int n = extent[axis];
    f.resize(n);
    d.resize(n);
    v.resize(n);
    z.resize(n + 1);
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    for (int u = 0; u < extent[a1]; ++u) {
      for (int w = 0; w < extent[a2]; ++w) {
        int idx[3];
        idx[a1] = u;
        idx[a2] = w;
        for (int q = 0; q < n; ++q) {
          idx[axis] = q;
          f[q] = grid[linear_index(dims, idx[0], idx[1], idx[2])];
        }
        distance_transform_1d(f, d, v, z);
        for (int q = 0; q < n; ++q) {
          idx[axis] = q;
          grid[linear_index(dims, idx[0], idx[1], idx[2])] = d[q];
        }
      }
    }
  }
}

std::vector<std::uint8_t> surface_voxels(const Volume& v, double iso) {
  const auto& d = v.dims;
  std::vector<std::uint8_t> surf(d.count(), 0);
  static constexpr int kOffsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                         {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int k = 0; k < d.nz; ++k) {
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        const auto idx = linear_index(d, i, j, k);
        if (!v.valid(idx)) continue;
        const double f = v.values[idx];
        if (f == iso) {
          surf[idx] = 1;
          continue;
        }
        const bool above = f > iso;
        for (const auto& o : kOffsets) {
          const int ii = i + o[0], jj = j + o[1], kk = k + o[2];
          if (ii < 0 || jj < 0 || kk < 0 || ii >= d.nx || jj >= d.ny || kk >= d.nz) continue;
          const auto nidx = linear_index(d, ii, jj, kk);
          if (!v.valid(nidx)) continue;
          if ((v.values[nidx] > iso) != above) {
            surf[idx] = 1;
            break;
          }
        }
      }
    }
  }
  return surf;
}

double gradient_magnitude(const Volume& v, int i, int j, int k) {
  const auto& d = v.dims;
  auto diff = [&](int axis) {
    int lo[3] = {i, j, k};
    int hi[3] = {i, j, k};
    lo[axis] = std::max(0, lo[axis] - 1);
    hi[axis] = std::min(d[axis] - 1, hi[axis] + 1);
    const int span = hi[axis] - lo[axis];
    if (span == 0) return 0.0;
    const auto a = linear_index(d, lo[0], lo[1], lo[2]);
    const auto b = linear_index(d, hi[0], hi[1], hi[2]);
    if (!v.valid(a) || !v.valid(b)) return 0.0;
    return (v.values[b] - v.values[a]) / span;
  };
  const double gx = diff(0), gy = diff(1), gz = diff(2);
  return std::sqrt(gx * gx + gy * gy + gz * gz);
}

void require_dims(const ImportanceMap& m, const Volume& v) {
  if (!(m.dims == v.dims)) {
    throw Error(ErrorCode::kShapeMismatch,
                "importance dims " + to_string(m.dims) + " differ from volume " + to_string(v.dims));
  }
}

}  // namespace

std::vector<double> isosurface_distance(const Volume& v, double isovalue) {
  const auto& r = v.value_range;
  if (isovalue < r.vmin || isovalue > r.vmax) {
    throw Error(ErrorCode::kEmptySurface, "isovalue " + std::to_string(isovalue) +
                                              " outside value range [" + std::to_string(r.vmin) +
                                              ", " + std::to_string(r.vmax) + "]");
  }
  const auto surf = surface_voxels(v, isovalue);
  std::vector<double> grid(v.dims.count());
  bool any = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = surf[i] ? 0.0 : kFar;
    any |= surf[i] != 0;
  }
  if (!any) {
    throw Error(ErrorCode::kEmptySurface,
                "no surface voxels for isovalue " + std::to_string(isovalue));
  }
  distance_transform_3d(grid, v.dims);
  for (auto& g : grid) g = std::sqrt(g);
  return grid;
}

ImportanceMap importance_from_isosurface(const Volume& v, double isovalue, double slope) {
  if (!(slope > 0.0)) throw Error(ErrorCode::kInvalidArgument, "slope must be positive");
  auto dist = isosurface_distance(v, isovalue);
  ImportanceMap m{v.dims, std::move(dist)};
  for (auto& x : m.values) x = std::exp(-slope * std::abs(x));
  apply_mask(m, v);
  return m;
}

ImportanceMap importance_from_threshold(const Volume& v, double ref) {
  ImportanceMap m{v.dims, std::vector<double>(v.dims.count())};
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = v.valid(i) && v.values[i] > ref ? 1.0 : 0.0;
  }
  return m;
}

VoxelBox parse_box(const std::string& text) {
  std::vector<int> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      parts.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInput, "invalid box component '" + tok + "'");
    }
  }
  if (parts.size() != 6) throw Error(ErrorCode::kInput, "box needs six integers x0,y0,z0,x1,y1,z1");
  return {{parts[0], parts[1], parts[2]}, {parts[3], parts[4], parts[5]}};
}

ImportanceMap importance_from_region(const Volume& v, const VoxelBox& box) {
  const auto& d = v.dims;
  std::array<int, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, box.lo[a]);
    hi[a] = std::min(d[a], box.hi[a]);
    if (lo[a] >= hi[a]) {
      throw Error(ErrorCode::kEmptyRegion, "box does not intersect the volume domain");
    }
  }
  ImportanceMap m{d, std::vector<double>(d.count(), 0.0)};
  for (int k = lo[2]; k < hi[2]; ++k) {
    for (int j = lo[1]; j < hi[1]; ++j) {
      for (int i = lo[0]; i < hi[0]; ++i) m.values[linear_index(d, i, j, k)] = 1.0;
    }
  }
  apply_mask(m, v);
  return m;
}

ImportanceMap isosurface_band_map(const Volume& v, double isovalue) {
  const auto& r = v.value_range;
  if (isovalue < r.vmin || isovalue > r.vmax) {
    throw Error(ErrorCode::kEmptySurface, "isovalue " + std::to_string(isovalue) +
                                              " outside value range");
  }
  const auto surf = surface_voxels(v, isovalue);
  const auto& d = v.dims;
  ImportanceMap m{d, std::vector<double>(d.count(), 0.0)};
  for (int k = 0; k < d.nz; ++k) {
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        const auto idx = linear_index(d, i, j, k);
        if (!v.valid(idx)) continue;
        const double band = std::max(gradient_magnitude(v, i, j, k), 1e-12);
        if (surf[idx] || std::abs(v.values[idx] - isovalue) <= band) m.values[idx] = 1.0;
      }
    }
  }
  return m;
}

std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::kRamp: return "ramp";
    case SynthKind::kGaussian: return "gaussian";
    case SynthKind::kGradient: return "gradient";
    case SynthKind::kUniformRandom: return "uniform_random";
    case SynthKind::kConstant: return "constant";
  }
  return "unknown";
}

SynthKind parse_synth_kind(const std::string& s) {
  for (auto k : kAllSynthKinds) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::kInput, "unknown synthetic map kind: " + s);
}

ImportanceMap synth_training_map(Dims dims, SynthKind kind, std::uint64_t seed, const Volume* v,
                                 const SynthOptions& options) {
  if (!dims.positive()) throw Error(ErrorCode::kInput, "dims must be positive");
  if (v != nullptr && !(v->dims == dims)) {
    throw Error(ErrorCode::kShapeMismatch, "volume dims differ from requested map dims");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double extent = std::max({dims.nx, dims.ny, dims.nz});
  auto random_center = [&] {
    return std::array<double, 3>{unit(rng) * (dims.nx - 1), unit(rng) * (dims.ny - 1),
                                 unit(rng) * (dims.nz - 1)};
  };
  auto distance = [](const std::array<double, 3>& c, int i, int j, int k) {
    const double dx = i - c[0], dy = j - c[1], dz = k - c[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  };

  ImportanceMap m{dims, std::vector<double>(dims.count(), 0.0)};
  switch (kind) {
    case SynthKind::kRamp: {
      const auto c = options.center.value_or(random_center());
      const double reach = options.radius.value_or((0.5 + unit(rng)) * extent);
      for (int k = 0; k < dims.nz; ++k)
        for (int j = 0; j < dims.ny; ++j)
          for (int i = 0; i < dims.nx; ++i)
            m.values[linear_index(dims, i, j, k)] = 1.0 - distance(c, i, j, k) / reach;
      break;
    }
    case SynthKind::kGaussian: {
      const auto c = options.center.value_or(random_center());
      const double sigma = options.sigma.value_or((0.1 + 0.4 * unit(rng)) * extent);
      if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be positive");
      for (int k = 0; k < dims.nz; ++k)
        for (int j = 0; j < dims.ny; ++j)
          for (int i = 0; i < dims.nx; ++i) {
            const double r = distance(c, i, j, k) / sigma;
            m.values[linear_index(dims, i, j, k)] = std::exp(-0.5 * r * r);
          }
      break;
    }
    case SynthKind::kGradient: {
      if (v == nullptr) {
        throw Error(ErrorCode::kInvalidArgument, "gradient maps require a volume");
      }
      double peak = 0.0;
      for (int k = 0; k < dims.nz; ++k)
        for (int j = 0; j < dims.ny; ++j)
          for (int i = 0; i < dims.nx; ++i) {
            const double g = gradient_magnitude(*v, i, j, k);
            m.values[linear_index(dims, i, j, k)] = g;
            peak = std::max(peak, g);
          }
      if (peak > 0.0) {
        for (auto& x : m.values) x /= peak;
      }
      break;
    }
    case SynthKind::kUniformRandom:
      for (auto& x : m.values) x = unit(rng);
      break;
    case SynthKind::kConstant: {
      const double level = options.level.value_or(unit(rng));
      std::fill(m.values.begin(), m.values.end(), level);
      break;
    }
  }
  for (auto& x : m.values) x = std::clamp(x, 0.0, 1.0);
  if (v != nullptr) apply_mask(m, *v);
  return m;
}

void apply_mask(ImportanceMap& map, const Volume& v) {
  require_dims(map, v);
  if (!v.has_mask()) return;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (!v.valid(i)) map.values[i] = 0.0;
  }
}

Volume importance_as_volume(const ImportanceMap& map, std::string name) {
  return make_volume(map.dims, map.values, std::move(name));
}

ImportanceMap importance_from_volume(const Volume& v) {
  ImportanceMap m{v.dims, v.values};
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (!v.valid(i) || !(m.values[i] >= 0.0 && m.values[i] <= 1.0)) {
      throw Error(ErrorCode::kInput, "importance values must lie in [0,1]");
    }
  }
  return m;
}

}  // namespace idlat
