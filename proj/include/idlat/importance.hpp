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
#include <optional>
#include <string>
#include <vector>

#include "idlat/volume.hpp"

namespace idlat {

/// Per-voxel importance in [0, 1], co-registered with a Volume (x-fastest).
struct ImportanceMap {
  Dims dims;
  std::vector<double> values;

  static ImportanceMap constant(Dims dims, double level) {
    return {dims, std::vector<double>(dims.count(), level)};
  }
};

/// Unsigned Euclidean distance (voxel units) from every voxel to the nearest
/// surface voxel of the `isovalue` level set. A surface voxel is a valid voxel
/// equal to the isovalue or with a valid 6-neighbour on the other side of it
/// (F > iso versus F <= iso). Computed with an exact separable distance
/// transform. Throws kEmptySurface when no surface voxel exists.
std::vector<double> isosurface_distance(const Volume& v, double isovalue);

/// exp(-slope * |d|) with d the distance to the isosurface.
ImportanceMap importance_from_isosurface(const Volume& v, double isovalue, double slope = 0.2);

/// 1 where F(p) > ref (strict), else 0.
ImportanceMap importance_from_threshold(const Volume& v, double ref);

/// Axis-aligned voxel box, half-open: lo <= p < hi per axis.
struct VoxelBox {
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};

  static VoxelBox single(int i, int j, int k) { return {{i, j, k}, {i + 1, j + 1, k + 1}}; }
  static VoxelBox whole(const Dims& d) { return {{0, 0, 0}, {d.nx, d.ny, d.nz}}; }
};

VoxelBox parse_box(const std::string& text);  // "x0,y0,z0,x1,y1,z1"

/// 1 inside the box, 0 outside. Throws kEmptyRegion when the box misses the domain.
ImportanceMap importance_from_region(const Volume& v, const VoxelBox& box);

/// Binary surface-band map: 1 where |F - iso| <= max(|grad F|, eps), i.e. the
/// voxel is within roughly one voxel of the level set; also 1 on sign-change
/// voxels. Used to build isosurface representations.
ImportanceMap isosurface_band_map(const Volume& v, double isovalue);

enum class SynthKind { kRamp, kGaussian, kGradient, kUniformRandom, kConstant };

inline constexpr std::array<SynthKind, 5> kAllSynthKinds = {
    SynthKind::kRamp, SynthKind::kGaussian, SynthKind::kGradient, SynthKind::kUniformRandom,
    SynthKind::kConstant};

std::string to_string(SynthKind k);
SynthKind parse_synth_kind(const std::string& s);

/// Optional overrides for synthesized maps. Unset fields are drawn from the
/// seeded generator.
struct SynthOptions {
  std::optional<std::array<double, 3>> center;  // voxel coordinates
  std::optional<double> sigma;                   // gaussian width, voxels
  std::optional<double> radius;                  // ramp reach, voxels
  std::optional<double> level;                   // constant level
};

/// Randomized training maps. `v` is required for kGradient and, when given,
/// zeroes importance on its invalid voxels.
ImportanceMap synth_training_map(Dims dims, SynthKind kind, std::uint64_t seed,
                                 const Volume* v = nullptr, const SynthOptions& options = {});

/// Forces importance to 0 on invalid voxels of `v`.
void apply_mask(ImportanceMap& map, const Volume& v);

Volume importance_as_volume(const ImportanceMap& map, std::string name = "importance");
ImportanceMap importance_from_volume(const Volume& v);

}  // namespace idlat
