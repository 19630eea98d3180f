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
#include <optional>
#include <span>

#include <json.hpp>

#include "idlat/importance.hpp"
#include "idlat/volume.hpp"

namespace idlat {

/// sum_i I_i (x_i - x~_i)^2 / sum_i I_i over unmasked voxels, accumulated
/// with compensated summation. Throws kEmptyRegion when the importance sums
/// to zero.
double wmse(std::span<const double> x, std::span<const double> x_tilde, std::span<const double> importance,
            std::span<const std::uint8_t> mask = {});

/// 10 log10(v^2 / wmse); +infinity when wmse is 0.
double psnr_from_wmse(double wmse_value, double value_range);
double psnr(std::span<const double> x, std::span<const double> x_tilde, std::span<const double> importance,
            double value_range, std::span<const std::uint8_t> mask = {});

struct RegionQuality {
  double mse = 0.0;
  double psnr = 0.0;
  std::size_t voxels = 0;
};

struct MetricReport {
  double wmse = 0.0;
  double psnr = 0.0;
  double value_range = 0.0;
  std::optional<double> lsr;
  // Plain MSE and PSNR over voxels with I > 0.5 and I <= 0.5; empty regions
  // are absent.
  std::optional<RegionQuality> important;
  std::optional<RegionQuality> unimportant;
};

inline constexpr double kImportantThreshold = 0.5;

/// Metrics in original units; v is the original volume's value range. The
/// mask of `original` applies. `lsr` is set when both byte counts are given.
MetricReport report(const Volume& original, const Volume& reconstruction, const ImportanceMap& importance,
                    std::optional<std::uint64_t> original_bytes = {},
                    std::optional<std::uint64_t> file_bytes = {});

/// JSON form; an infinite PSNR is written as null.
nlohmann::json to_json(const MetricReport& r);

}  // namespace idlat
