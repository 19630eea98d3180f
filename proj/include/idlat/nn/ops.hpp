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

#include "idlat/nn/autograd.hpp"

namespace idlat::nn {

enum class PadMode { kReplicate, kZero };

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  PadMode mode = PadMode::kReplicate;

  int output_size(int n) const { return (n + 2 * pad - kernel) / stride + 1; }
};

/// 3D convolution. x: (Cin, D, H, W); w: (Cout, Cin, k, k, k); b: (Cout).
Var conv3d(const Var& x, const Var& w, const Var& b, const ConvGeometry& g);

/// Nearest-neighbour upsampling of the three spatial axes by `factor`.
Var upsample_nearest(const Var& x, int factor);

/// max(x, 0) + slope * min(x, 0); slope 0 is a plain ReLU.
Var leaky_relu(const Var& x, double slope);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var softplus(const Var& x);

/// max(x, bound). The gradient still flows below the bound when it points
/// upward, so clamped values can recover during training.
Var lower_bound(const Var& x, double bound);

/// y = W * flatten(x) + b with W: (m, n), b: (m). Output shape (m).
Var linear(const Var& x, const Var& w, const Var& b);

Var reshape(const Var& x, Shape shape);

/// Channels [begin, end) of a (C, ...) tensor.
Var slice_channels(const Var& x, int begin, int end);

/// Spatial crop [offset, offset + size) on all three spatial axes of (C, D, H, W).
Var center_crop(const Var& x, int offset, int size);

/// Sum of all elements, shape (1).
Var sum(const Var& x);

/// sum_i w_i (x_i - y_i)^2 with constant target x and weights w. Shape (1).
Var weighted_sse(const Tensor& target, const Var& y, const Tensor& weights);

/// sum_i -log2(p_i). Shape (1).
Var neg_log2_sum(const Var& p);

}  // namespace idlat::nn
