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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace idlat {

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  bool positive() const { return nx > 0 && ny > 0 && nz > 0; }
  int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

// Storage order is x-fastest: i + nx * (j + ny * k).
inline std::size_t linear_index(const Dims& d, int i, int j, int k) {
  return static_cast<std::size_t>(i) +
         static_cast<std::size_t>(d.nx) *
             (static_cast<std::size_t>(j) + static_cast<std::size_t>(d.ny) * k);
}

struct Voxel {
  int i = 0;
  int j = 0;
  int k = 0;
  friend bool operator==(const Voxel&, const Voxel&) = default;
};

inline Voxel voxel_of(const Dims& d, std::size_t index) {
  const auto plane = static_cast<std::size_t>(d.nx) * d.ny;
  const auto k = index / plane;
  const auto rem = index % plane;
  return {static_cast<int>(rem % d.nx), static_cast<int>(rem / d.nx), static_cast<int>(k)};
}

enum class DType { kF32LE, kF64LE };

std::size_t dtype_size(DType t);
DType parse_dtype(const std::string& s);

struct ValueRange {
  double vmin = 0.0;
  double vmax = 0.0;
  double extent() const { return vmax - vmin; }
};

/// A 3D scalar field. Values are kept in double precision in memory; f32
/// files round-trip exactly through the widening conversion.
///
/// `mask` is either empty (every voxel valid) or holds one flag per voxel,
/// 1 for valid and 0 for invalid (non-finite or sentinel). Volumes are not
/// mutated after construction by any of the library operations.
struct Volume {
  Dims dims;
  std::vector<double> values;
  ValueRange value_range;
  std::vector<std::uint8_t> mask;
  std::string name;

  bool has_mask() const { return !mask.empty(); }
  bool valid(std::size_t index) const { return mask.empty() || mask[index] != 0; }
  double at(int i, int j, int k) const { return values[linear_index(dims, i, j, k)]; }
  std::size_t valid_count() const;
};

enum class NormalizationScheme { kMinMax };

struct NormalizationParams {
  double vmin = 0.0;
  double vmax = 1.0;
  NormalizationScheme scheme = NormalizationScheme::kMinMax;

  double apply(double v) const { return (v - vmin) / (vmax - vmin); }
  double invert(double u) const { return vmin + u * (vmax - vmin); }
};

/// Value range over valid voxels. Returns (0, 0) when nothing is valid.
ValueRange compute_value_range(const std::vector<double>& values,
                               const std::vector<std::uint8_t>& mask);

/// Builds a Volume from in-memory values, masking non-finite entries.
Volume make_volume(Dims dims, std::vector<double> values, std::string name = {});

Volume load_raw(const std::filesystem::path& path, Dims dims, DType dtype);
void save_raw(const Volume& v, const std::filesystem::path& path, DType dtype);

/// Global min-max normalization of the valid voxels to [0, 1]. Invalid voxels
/// are set to 0. Throws kDegenerateRange when vmin == vmax.
std::pair<Volume, NormalizationParams> normalize(const Volume& v);

/// Normalization with externally fixed parameters (e.g. a model's).
Volume normalize_with(const Volume& v, const NormalizationParams& params);
Volume denormalize(const Volume& v, const NormalizationParams& params);

/// Marks voxels equal to `sentinel` (exactly, or after rounding both to f32)
/// invalid and recomputes the value range.
Volume apply_sentinel_mask(Volume v, double sentinel);

/// Description of a raw volume on disk, as found in JSON config files:
/// {"path": ..., "dims": [nx, ny, nz], "dtype": "f32le", "sentinel": 1e35}.
struct VolumeSource {
  std::filesystem::path path;
  Dims dims;
  DType dtype = DType::kF32LE;
  std::optional<double> sentinel;
};

VolumeSource read_volume_config(const std::filesystem::path& json_path);
Volume load_volume(const VolumeSource& src);

}  // namespace idlat
