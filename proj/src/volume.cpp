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

#include "idlat/volume.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "idlat/binary_io.hpp"
#include "idlat/error.hpp"

namespace idlat {

std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.nx) + "," + std::to_string(d.ny) + "," + std::to_string(d.nz) + ")";
}

std::size_t dtype_size(DType t) { return t == DType::kF32LE ? 4 : 8; }

DType parse_dtype(const std::string& s) {
  if (s == "f32le" || s == "f32" || s == "float32") return DType::kF32LE;
  if (s == "f64le" || s == "f64" || s == "float64") return DType::kF64LE;
  throw Error(ErrorCode::kInput, "unknown dtype: " + s);
}

std::size_t Volume::valid_count() const {
  if (mask.empty()) return values.size();
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

ValueRange compute_value_range(const std::vector<double>& values,
                               const std::vector<std::uint8_t>& mask) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  if (lo > hi) return {0.0, 0.0};
  return {lo, hi};
}

Volume make_volume(Dims dims, std::vector<double> values, std::string name) {
  if (!dims.positive()) throw Error(ErrorCode::kInput, "dims must be positive: " + to_string(dims));
  if (values.size() != dims.count()) {
    throw Error(ErrorCode::kInput, "value count " + std::to_string(values.size()) +
                                       " does not match dims " + to_string(dims));
  }
  Volume v;
  v.dims = dims;
  v.name = std::move(name);
  bool any_bad = false;
  for (double x : values) any_bad |= !std::isfinite(x);
  if (any_bad) {
    v.mask.assign(values.size(), 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) v.mask[i] = 0;
    }
  }
  v.values = std::move(values);
  v.value_range = compute_value_range(v.values, v.mask);
  return v;
}

Volume load_raw(const std::filesystem::path& path, Dims dims, DType dtype) {
  if (!dims.positive()) throw Error(ErrorCode::kInput, "dims must be positive: " + to_string(dims));
  auto bytes = bin::read_file(path.string());
  const auto expected = dims.count() * dtype_size(dtype);
  if (bytes.size() != expected) {
    throw Error(ErrorCode::kInput, "size mismatch for " + path.string() + ": expected " +
                                       std::to_string(expected) + " bytes, found " +
                                       std::to_string(bytes.size()));
  }
  std::vector<double> values(dims.count());
  bin::Reader r(bytes);
  for (auto& x : values) {
    x = dtype == DType::kF32LE ? static_cast<double>(r.get<float>("voxel")) : r.get<double>("voxel");
  }
  return make_volume(dims, std::move(values), path.filename().string());
}

void save_raw(const Volume& v, const std::filesystem::path& path, DType dtype) {
  if (path.empty()) throw Error(ErrorCode::kIo, "empty output path");
  std::vector<std::uint8_t> out;
  out.reserve(v.values.size() * dtype_size(dtype));
  for (double x : v.values) {
    if (dtype == DType::kF32LE) {
      bin::put(out, static_cast<float>(x));
    } else {
      bin::put(out, x);
    }
  }
  bin::write_file(path.string(), out);
}

std::pair<Volume, NormalizationParams> normalize(const Volume& v) {
  const auto range = compute_value_range(v.values, v.mask);
  if (!(range.vmin < range.vmax)) {
    throw Error(ErrorCode::kDegenerateRange,
                "degenerate value range [" + std::to_string(range.vmin) + ", " +
                    std::to_string(range.vmax) + "] in volume '" + v.name + "'");
  }
  NormalizationParams params{range.vmin, range.vmax, NormalizationScheme::kMinMax};
  return {normalize_with(v, params), params};
}

Volume normalize_with(const Volume& v, const NormalizationParams& params) {
  if (!(params.vmin < params.vmax)) {
    throw Error(ErrorCode::kDegenerateRange, "normalization requires vmin < vmax");
  }
  Volume out = v;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = v.valid(i) ? params.apply(v.values[i]) : 0.0;
  }
  out.value_range = compute_value_range(out.values, out.mask);
  return out;
}

Volume denormalize(const Volume& v, const NormalizationParams& params) {
  Volume out = v;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (v.valid(i)) out.values[i] = params.invert(v.values[i]);
  }
  out.value_range = compute_value_range(out.values, out.mask);
  return out;
}

namespace {
// f32 files store the sentinel rounded to single precision.
bool is_sentinel(double x, double sentinel) {
  return x == sentinel || static_cast<float>(x) == static_cast<float>(sentinel);
}
}  // namespace

Volume apply_sentinel_mask(Volume v, double sentinel) {
  bool hit = false;
  for (double x : v.values) hit |= is_sentinel(x, sentinel);
  if (!hit) return v;
  if (v.mask.empty()) v.mask.assign(v.values.size(), 1);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    if (is_sentinel(v.values[i], sentinel)) v.mask[i] = 0;
  }
  v.value_range = compute_value_range(v.values, v.mask);
  return v;
}

VolumeSource read_volume_config(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open config: " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInput, "invalid volume config: " + std::string(e.what()));
  }
  VolumeSource src;
  try {
    src.path = j.at("path").get<std::string>();
    if (src.path.is_relative()) src.path = json_path.parent_path() / src.path;
    auto d = j.at("dims").get<std::vector<int>>();
    if (d.size() != 3) throw Error(ErrorCode::kInput, "dims must have three entries");
    src.dims = {d[0], d[1], d[2]};
    if (j.contains("dtype")) src.dtype = parse_dtype(j["dtype"].get<std::string>());
    if (j.contains("sentinel") && !j["sentinel"].is_null()) src.sentinel = j["sentinel"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInput, "invalid volume config: " + std::string(e.what()));
  }
  return src;
}

Volume load_volume(const VolumeSource& src) {
  auto v = load_raw(src.path, src.dims, src.dtype);
  if (src.sentinel) v = apply_sentinel_mask(std::move(v), *src.sentinel);
  return v;
}

}  // namespace idlat
