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

#include <cmath>

#include "idlat/nn/ops.hpp"
#include "test_support.hpp"

namespace idlat::nn {
namespace {

using idlat::testing::gradient_check;
using idlat::testing::random_tensor;

// Direct seven-loop convolution.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeometry& g) {
  const int cin = x.dim(0), d = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = g.kernel;
  const int od = g.output_size(d), oh = g.output_size(h), ow = g.output_size(wd);
  Tensor out({cout, od, oh, ow});
  for (int o = 0; o < cout; ++o)
    for (int z = 0; z < od; ++z)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = b.data[o];
          for (int c = 0; c < cin; ++c)
            for (int kz = 0; kz < k; ++kz)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  int iz = z * g.stride - g.pad + kz, iy = y * g.stride - g.pad + ky, ix = xx * g.stride - g.pad + kx;
                  const bool in = iz >= 0 && iz < d && iy >= 0 && iy < h && ix >= 0 && ix < wd;
                  if (!in && g.mode == PadMode::kZero) continue;
                  iz = std::clamp(iz, 0, d - 1);
                  iy = std::clamp(iy, 0, h - 1);
                  ix = std::clamp(ix, 0, wd - 1);
                  const double wv = w.data[((((std::size_t)o * cin + c) * k + kz) * k + ky) * k + kx];
                  acc += wv * x.data[(((std::size_t)c * d + iz) * h + iy) * wd + ix];
                }
          out.data[(((std::size_t)o * od + z) * oh + y) * ow + xx] = acc;
        }
  return out;
}

TEST(Ops, ConvMatchesNaiveLoops) {
  std::mt19937_64 rng(1);
  for (PadMode mode : {PadMode::kReplicate, PadMode::kZero}) {
    for (int stride : {1, 2}) {
      for (int kernel : {1, 3}) {
        ConvGeometry g{kernel, stride, kernel / 2, mode};
        const Tensor x = random_tensor({2, 5, 6, 4}, rng);
        const Tensor w = random_tensor({3, 2, kernel, kernel, kernel}, rng);
        const Tensor b = random_tensor({3}, rng);
        const Tensor got = conv3d(Var::constant(x), Var::constant(w), Var::constant(b), g).value();
        const Tensor want = naive_conv(x, w, b, g);
        ASSERT_EQ(got.shape, want.shape);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-12);
      }
    }
  }
}

TEST(Ops, ConvGradients) {
  std::mt19937_64 rng(2);
  const ConvGeometry g{3, 2, 1, PadMode::kReplicate};
  const Tensor x = random_tensor({2, 4, 4, 4}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Tensor probe = random_tensor({3, 2, 2, 2}, rng);
  auto dot = [&](const Var& y) { return sum(mul(y, Var::constant(probe))); };
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(conv3d(v, Var::constant(w), Var::constant(b), g)); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(conv3d(Var::constant(x), v, Var::constant(b), g)); }, w), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(conv3d(Var::constant(x), Var::constant(w), v, g)); }, b), 1e-7);
}

TEST(Ops, ZeroPadConvGradient) {
  std::mt19937_64 rng(3);
  const ConvGeometry g{3, 1, 1, PadMode::kZero};
  const Tensor w = random_tensor({2, 1, 3, 3, 3}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor probe = random_tensor({2, 3, 3, 3}, rng);
  EXPECT_LT(gradient_check(
                [&](const Var& v) {
                  return sum(mul(conv3d(v, Var::constant(w), Var::constant(b), g), Var::constant(probe)));
                },
                random_tensor({1, 3, 3, 3}, rng)),
            1e-7);
}

TEST(Ops, UpsampleNearest) {
  const Tensor x({1, 1, 1, 2}, {1.0, 2.0});
  const Tensor y = upsample_nearest(Var::constant(x), 2).value();
  EXPECT_EQ(y.shape, (Shape{1, 2, 2, 4}));
  EXPECT_EQ(y.data[0], 1.0);
  EXPECT_EQ(y.data[1], 1.0);
  EXPECT_EQ(y.data[2], 2.0);
  EXPECT_EQ(y.data[7], 2.0);
  std::mt19937_64 rng(4);
  const Tensor probe = random_tensor({2, 4, 6, 2}, rng);
  EXPECT_LT(gradient_check([&](const Var& v) { return sum(mul(upsample_nearest(v, 2), Var::constant(probe))); },
                           random_tensor({2, 2, 3, 1}, rng)),
            1e-8);
}

TEST(Ops, ElementwiseGradients) {
  std::mt19937_64 rng(5);
  const Shape s{2, 3, 2, 2};
  const Tensor other = random_tensor(s, rng);
  const Tensor probe = random_tensor(s, rng);
  auto dot = [&](const Var& y) { return sum(mul(y, Var::constant(probe))); };
  // Keep values away from the kinks of leaky_relu and lower_bound.
  Tensor x = random_tensor(s, rng);
  for (auto& v : x.data) v += v > 0 ? 0.05 : -0.05;
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(leaky_relu(v, 0.1)); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(add(v, Var::constant(other))); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(mul(v, Var::constant(other))); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(scale(v, -2.5)); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(softplus(v)); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(lower_bound(v, -5.0)); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(reshape(reshape(v, {24}), {2, 3, 2, 2})); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return sum(slice_channels(v, 1, 2)); }, x), 1e-7);
}

TEST(Ops, LowerBoundLetsUpwardGradientThrough) {
  const Var x = Var::leaf(Tensor({2}, {-1.0, -1.0}), true);
  const Var y = lower_bound(x, 0.0);
  EXPECT_EQ(y.value().data, (std::vector<double>{0.0, 0.0}));
  // d/dy of (-y0 + y1): the first pushes y up (negative gradient), the second down.
  backward(sum(mul(y, Var::constant(Tensor({2}, {-1.0, 1.0})))));
  EXPECT_EQ(x.grad().data[0], -1.0);
  EXPECT_EQ(x.grad().data[1], 0.0);
}

TEST(Ops, LinearAndCropGradients) {
  std::mt19937_64 rng(6);
  const Tensor w = random_tensor({3, 8}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Tensor x = random_tensor({1, 2, 2, 2}, rng);
  const Tensor probe = random_tensor({3}, rng);
  auto dot = [&](const Var& y) { return sum(mul(y, Var::constant(probe))); };
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(linear(v, Var::constant(w), Var::constant(b))); }, x), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(linear(Var::constant(x), v, Var::constant(b))); }, w), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(linear(Var::constant(x), Var::constant(w), v)); }, b), 1e-7);

  const Tensor big = random_tensor({2, 5, 5, 5}, rng);
  const Tensor cprobe = random_tensor({2, 3, 3, 3}, rng);
  EXPECT_LT(gradient_check([&](const Var& v) { return sum(mul(center_crop(v, 1, 3), Var::constant(cprobe))); }, big),
            1e-7);
  const Tensor crop = center_crop(Var::constant(big), 1, 3).value();
  EXPECT_EQ(crop.data[0], big.data[(0 * 5 + 1) * 25 + 1 * 5 + 1]);
}

TEST(Ops, LossPrimitives) {
  std::mt19937_64 rng(7);
  const Tensor t = random_tensor({6}, rng);
  const Tensor w = random_tensor({6}, rng, 0.1, 2.0);
  EXPECT_LT(gradient_check([&](const Var& v) { return weighted_sse(t, v, w); }, random_tensor({6}, rng)), 1e-7);
  EXPECT_LT(gradient_check([&](const Var& v) { return neg_log2_sum(v); }, random_tensor({6}, rng, 0.05, 1.0)), 1e-6);
  const Var p = Var::constant(Tensor({2}, {0.25, 0.125}));
  EXPECT_DOUBLE_EQ(neg_log2_sum(p).value().data[0], 5.0);
}

TEST(Ops, ShapeErrors) {
  const Var a = Var::constant(Tensor({2, 2}));
  const Var b = Var::constant(Tensor({4}));
  EXPECT_IDLAT_ERROR(add(a, b), ErrorCode::kShapeMismatch);
  EXPECT_IDLAT_ERROR(reshape(a, {3}), ErrorCode::kShapeMismatch);
}

TEST(Autograd, SharedSubgraphAccumulates) {
  const Var x = Var::leaf(Tensor({1}, {3.0}), true);
  const Var y = mul(x, x);  // x used twice
  backward(add(y, x));
  EXPECT_DOUBLE_EQ(x.grad().data[0], 7.0);
}

TEST(Autograd, ConstantsBuildNoGraph) {
  const Var x = Var::constant(Tensor({1}, {3.0}));
  EXPECT_FALSE(mul(x, x).requires_grad());
}

}  // namespace
}  // namespace idlat::nn
