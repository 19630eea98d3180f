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

#include <string>

#include "idlat/image.hpp"
#include "idlat/volume.hpp"

namespace idlat {

/// Parses "x", "y", "z" or "0", "1", "2".
int parse_axis(const std::string& s);

/// Gray slice perpendicular to `axis` at `index`, values mapped linearly from
/// `range` onto 0..255. Invalid voxels are black. Image rows run along the
/// second remaining axis, columns along the first.
Image render_slice(const Volume& v, int axis, int index, ValueRange range);

/// Contour composite along `axis`: each pixel counts the slices in which it
/// lies on the `isovalue` contour (a valid 4-neighbour in the slice plane on
/// the other side of the isovalue) and is shaded by that fraction.
Image render_contours(const Volume& v, int axis, double isovalue);

}  // namespace idlat
