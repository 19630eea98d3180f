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

#include "idlat/metrics.hpp"

#include <cmath>
#include <limits>

#include "idlat/codec.hpp"
#include "idlat/error.hpp"

namespace idlat {
namespace {

// Neumaier summation.
struct Accumulator {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

void check_sizes(std::size_t n, std::size_t m, std::size_t k, std::size_t mask) {
  if (n != m || n != k || (mask != 0 && mask != n)) {
    throw Error(ErrorCode::kShapeMismatch, "metric inputs differ in size");
  }
}

nlohmann::json psnr_json(double p) { return std::isinf(p) ? nlohmann::json(nullptr) : nlohmann::json(p); }

}  // namespace

double wmse(std::span<const double> x, std::span<const double> x_tilde, std::span<const double> importance,
            std::span<const std::uint8_t> mask) {
  check_sizes(x.size(), x_tilde.size(), importance.size(), mask.size());
  Accumulator num, den;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double d = x[i] - x_tilde[i];
    num.add(importance[i] * d * d);
    den.add(importance[i]);
  }
  if (!(den.value() > 0.0)) throw Error(ErrorCode::kEmptyRegion, "importance sums to zero over valid voxels");
  return num.value() / den.value();
}

double psnr_from_wmse(double wmse_value, double value_range) {
  if (!(value_range > 0.0)) throw Error(ErrorCode::kInvalidArgument, "value range must be > 0");
  if (wmse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(value_range * value_range / wmse_value);
}

double psnr(std::span<const double> x, std::span<const double> x_tilde, std::span<const double> importance,
            double value_range, std::span<const std::uint8_t> mask) {
  return psnr_from_wmse(wmse(x, x_tilde, importance, mask), value_range);
}

MetricReport report(const Volume& original, const Volume& reconstruction, const ImportanceMap& importance,
                    std::optional<std::uint64_t> original_bytes, std::optional<std::uint64_t> file_bytes) {
  if (!(original.dims == reconstruction.dims) || !(original.dims == importance.dims)) {
    throw Error(ErrorCode::kShapeMismatch, "original " + to_string(original.dims) + ", reconstruction " +
                                               to_string(reconstruction.dims) + ", importance " +
                                               to_string(importance.dims));
  }
  MetricReport r;
  r.value_range = original.value_range.extent();
  r.wmse = wmse(original.values, reconstruction.values, importance.values, original.mask);
  r.psnr = psnr_from_wmse(r.wmse, r.value_range);
  if (original_bytes && file_bytes) r.lsr = latent_size_ratio(*original_bytes, *file_bytes);

  Accumulator in_sum, out_sum;
  std::size_t in_n = 0, out_n = 0;
  for (std::size_t i = 0; i < original.values.size(); ++i) {
    if (!original.valid(i)) continue;
    const double d = original.values[i] - reconstruction.values[i];
    if (importance.values[i] > kImportantThreshold) {
      in_sum.add(d * d);
      ++in_n;
    } else {
      out_sum.add(d * d);
      ++out_n;
    }
  }
  auto region = [&](const Accumulator& acc, std::size_t n) {
    RegionQuality q;
    q.voxels = n;
    q.mse = acc.value() / static_cast<double>(n);
    q.psnr = psnr_from_wmse(q.mse, r.value_range);
    return q;
  };
  if (in_n > 0) r.important = region(in_sum, in_n);
  if (out_n > 0) r.unimportant = region(out_sum, out_n);
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["wmse"] = r.wmse;
  j["psnr"] = psnr_json(r.psnr);
  j["value_range"] = r.value_range;
  j["lsr"] = r.lsr ? nlohmann::json(*r.lsr) : nlohmann::json(nullptr);
  auto region = [](const std::optional<RegionQuality>& q) {
    if (!q) return nlohmann::json(nullptr);
    return nlohmann::json{{"mse", q->mse}, {"psnr", psnr_json(q->psnr)}, {"voxels", q->voxels}};
  };
  j["regions"] = {{"important", region(r.important)}, {"unimportant", region(r.unimportant)}};
  return j;
}

}  // namespace idlat
