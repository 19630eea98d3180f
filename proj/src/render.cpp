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

#include "idlat/render.hpp"

#include <algorithm>

#include "idlat/error.hpp"

namespace idlat {
namespace {

// Voxel coordinate for (column u, row w) of a slice at `index` along `axis`.
std::array<int, 3> voxel_at(int axis, int index, int u, int w) {
  switch (axis) {
    case 0: return {index, u, w};
    case 1: return {u, index, w};
    default: return {u, w, index};
  }
}

std::pair<int, int> plane_size(const Dims& d, int axis) {
  switch (axis) {
    case 0: return {d.ny, d.nz};
    case 1: return {d.nx, d.nz};
    default: return {d.nx, d.ny};
  }
}

void check_axis(int axis) {
  if (axis < 0 || axis > 2) throw Error(ErrorCode::kInvalidArgument, "axis must be 0, 1 or 2");
}

}  // namespace

int parse_axis(const std::string& s) {
  if (s == "x" || s == "0") return 0;
  if (s == "y" || s == "1") return 1;
  if (s == "z" || s == "2") return 2;
  throw Error(ErrorCode::kInvalidArgument, "unknown axis '" + s + "'");
}

Image render_slice(const Volume& v, int axis, int index, ValueRange range) {
  check_axis(axis);
  if (index < 0 || index >= v.dims[axis]) {
    throw Error(ErrorCode::kInvalidArgument, "slice index " + std::to_string(index) + " outside [0, " +
                                                 std::to_string(v.dims[axis]) + ")");
  }
  const auto [w, h] = plane_size(v.dims, axis);
  Image img(w, h, 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto p = voxel_at(axis, index, c, r);
      const std::size_t idx = linear_index(v.dims, p[0], p[1], p[2]);
      *img.at(c, r) = v.valid(idx) ? gray_level(v.values[idx], range.vmin, range.vmax) : 0;
    }
  }
  return img;
}

Image render_contours(const Volume& v, int axis, double isovalue) {
  check_axis(axis);
  const auto [w, h] = plane_size(v.dims, axis);
  const int depth = v.dims[axis];
  std::vector<int> hits(static_cast<std::size_t>(w) * h, 0);
  for (int s = 0; s < depth; ++s) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto p = voxel_at(axis, s, c, r);
        const std::size_t idx = linear_index(v.dims, p[0], p[1], p[2]);
        if (!v.valid(idx)) continue;
        const bool above = v.values[idx] > isovalue;
        bool edge = false;
        for (const auto& [dc, dr] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int cc = c + dc, rr = r + dr;
          if (cc < 0 || cc >= w || rr < 0 || rr >= h) continue;
          const auto q = voxel_at(axis, s, cc, rr);
          const std::size_t qi = linear_index(v.dims, q[0], q[1], q[2]);
          if (v.valid(qi) && (v.values[qi] > isovalue) != above) {
            edge = true;
            break;
          }
        }
        if (edge) ++hits[static_cast<std::size_t>(r) * w + c];
      }
    }
  }
  Image img(w, h, 1);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    img.pixels[i] = gray_level(static_cast<double>(hits[i]), 0.0, static_cast<double>(depth));
  }
  return img;
}

}  // namespace idlat
