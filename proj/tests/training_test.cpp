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
#include <fstream>

#include "idlat/checkpoint.hpp"
#include "idlat/training.hpp"
#include "test_support.hpp"

namespace idlat {
namespace {

using nn::Tensor;
using nn::Var;
using testing::gradient_check;
using testing::random_tensor;
using testing::TempDir;

double sse_oracle(const Tensor& x, const Tensor& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x.data[i] - y.data[i]) * (x.data[i] - y.data[i]);
  return s;
}

TEST(DistortionLoss, ZeroExponentIsPlainSse) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Tensor x = random_tensor({1, 3, 4, 5}, rng), y = random_tensor({1, 3, 4, 5}, rng);
    const Tensor imp = random_tensor({1, 3, 4, 5}, rng, 0.0, 1.0);
    const double got = distortion_loss(x, Var::constant(y), imp, 0.0).value().data[0];
    EXPECT_NEAR(got, sse_oracle(x, y), 1e-12 * std::max(1.0, sse_oracle(x, y)));
  }
}

TEST(DistortionLoss, HandExample) {
  const Tensor x({2}, std::vector<double>{1.0, 2.0});
  const Tensor y({2}, std::vector<double>{1.0, 3.0});
  const Tensor imp({2}, std::vector<double>{0.0, 1.0});
  EXPECT_NEAR(distortion_loss(x, Var::constant(y), imp, std::log(2.0)).value().data[0], 2.0, 1e-15);
  EXPECT_EQ(distortion_loss(x, Var::constant(x), imp, 4.0).value().data[0], 0.0);
}

TEST(DistortionLoss, MaskedVoxelsDoNotCount) {
  const Tensor x({2}, std::vector<double>{0.0, 0.0});
  const Tensor y({2}, std::vector<double>{1.0, 100.0});
  const std::vector<std::uint8_t> mask = {1, 0};
  EXPECT_DOUBLE_EQ(distortion_loss(x, Var::constant(y), Tensor({2}, 0.5), 2.0, mask).value().data[0],
                   std::exp(1.0));
  EXPECT_IDLAT_ERROR(distortion_loss(x, Var::constant(Tensor({3})), Tensor({2}), 1.0), ErrorCode::kShapeMismatch);
}

TEST(DistortionLoss, HigherImportanceWeighsMore) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({10}, rng), y = random_tensor({10}, rng);
  double prev = -1.0;
  for (double level : {0.0, 0.25, 0.5, 1.0}) {
    const double l = distortion_loss(x, Var::constant(y), Tensor({10}, level), 3.0).value().data[0];
    EXPECT_GT(l, prev);
    prev = l;
  }
}

TEST(RateLoss, HandExamples) {
  const Var half = Var::constant(Tensor({4}, 0.5));
  const Var one = Var::constant(Tensor({3}, 1.0));
  const Var quarter = Var::constant(Tensor({1}, 0.25));
  EXPECT_DOUBLE_EQ(rate_loss(std::vector<Var>{half}).value().data[0], 4.0);
  EXPECT_DOUBLE_EQ(rate_loss(std::vector<Var>{one}).value().data[0], 0.0);
  EXPECT_DOUBLE_EQ(rate_loss(std::vector<Var>{half, quarter, one}).value().data[0], 6.0);
  const Var mixed = Var::constant(Tensor({2}, std::vector<double>{0.25, 0.125}));
  EXPECT_DOUBLE_EQ(rate_loss(std::vector<Var>{mixed}).value().data[0], 5.0);
}

TEST(RateLoss, FloorAndValidation) {
  LikelihoodStats st;
  const Var tiny = Var::constant(Tensor({2}, 0.0));
  EXPECT_NEAR(rate_loss(std::vector<Var>{tiny}, &st).value().data[0], -2.0 * std::log2(kLikelihoodFloor), 1e-9);
  EXPECT_EQ(st.clamped, 2u);
  EXPECT_IDLAT_ERROR(rate_loss(std::vector<Var>{Var::constant(Tensor({1}, 1.5))}), ErrorCode::kInvalidArgument);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const nn::Shape shape = {1, 2, 3, 2};
    const Tensor x = random_tensor(shape, rng);
    const Tensor imp = random_tensor(shape, rng, 0.0, 1.0);
    const Var p = Var::constant(random_tensor({5}, rng, 0.05, 1.0));
    TrainConfig cfg;
    cfg.lambda = 0.01 + 10.0 * (t / 20.0);
    cfg.a = 3.0 * (t % 4) / 3.0;
    const auto f = [&](const Var& xt) { return total_loss(x, xt, std::vector<Var>{p}, imp, cfg).total; };
    EXPECT_LT(gradient_check(f, random_tensor(shape, rng)), 1e-5) << "case " << t;
  }
}

TEST(TotalLoss, ComposesAndRejectsNonFinite) {
  const Var r = Var::constant(Tensor({1}, 3.0));
  const Var d = Var::constant(Tensor({1}, 2.0));
  EXPECT_DOUBLE_EQ(total_loss(r, d, 0.5).total.value().data[0], 4.0);
  EXPECT_DOUBLE_EQ(total_loss(r, d, 0.0).total.value().data[0], 3.0);
  EXPECT_DOUBLE_EQ(total_loss(Var::constant(Tensor({1}, 5.0)), d, 3.0).total.value().data[0], 11.0);
  EXPECT_IDLAT_ERROR(total_loss(r, Var::constant(Tensor({1}, NAN)), 1.0), ErrorCode::kDivergence);
  EXPECT_IDLAT_ERROR(total_loss(r, Var::constant(Tensor({1}, INFINITY)), 1.0), ErrorCode::kDivergence);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Parameter> params(2);
  params[0] = {"a", Parameter::Group::kMain, Var::leaf(Tensor({2}, std::vector<double>{1.0, 1.0}), true)};
  params[1] = {"b", Parameter::Group::kEntropy, Var::leaf(Tensor({1}, 0.0), true)};
  params[0].var.mutable_grad() = Tensor({2}, std::vector<double>{3.0, -0.5});
  params[1].var.mutable_grad() = Tensor({1}, 2.0);
  Adam adam;
  adam.step(params, 0.1, 0.01);
  EXPECT_NEAR(params[0].var.value().data[0], 0.9, 1e-7);
  EXPECT_NEAR(params[0].var.value().data[1], 1.1, 1e-7);
  EXPECT_NEAR(params[1].var.value().data[0], -0.01, 1e-7);
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.latent_channels = 2;
  c.enc_layers = {{4, 2}, {2, 2}};
  c.padded_edge = 8;
  c.cond_channels = 2;
  c.hyper_channels = 2;
  c.hyper_latent = 2;
  c.seed = 4;
  return c;
}

std::vector<DataBlock> tiny_blocks(int count) {
  const Volume v = testing::blob_volume({12, 12, 12}, 9, 0.01);
  const auto [norm, params] = normalize(v);
  return random_blocks(norm, ImportanceMap::constant(v.dims, 1.0), BlockSpec{4, 2}, count, 17);
}

Model tiny_model() {
  Model m(tiny_config());
  m.block_spec = {4, 2};
  return m;
}

TEST(ForwardBlock, FiniteLossWithGradients) {
  Model m = tiny_model();
  m.set_trainable(true);
  const auto blocks = tiny_blocks(1);
  std::mt19937_64 rng(1);
  TrainConfig cfg;
  const auto r = forward_block(m, blocks[0], blocks[0].importance, cfg, rng);
  EXPECT_TRUE(std::isfinite(r.loss.total.value().data[0]));
  EXPECT_GT(r.loss.rate.value().data[0], 0.0);
  EXPECT_EQ(r.x_tilde.shape(), m.block_shape());
  nn::backward(r.loss.total);
  for (const auto& p : m.parameters()) {
    ASSERT_EQ(p.var.grad().size(), p.var.value().size()) << p.name;
  }
  EXPECT_IDLAT_ERROR(forward_block(m, blocks[0], std::vector<double>(3), cfg, rng), ErrorCode::kShapeMismatch);
}

TEST(Train, DeterministicAndDecreasing) {
  const auto blocks = tiny_blocks(64);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 2;
  cfg.lambda = 10.0;
  cfg.a = 5.0;
  cfg.lr_main = 1e-3;
  cfg.lr_entropy = 1e-2;
  cfg.seed = 11;
  TempDir dir;
  cfg.log_csv = dir / "log.csv";
  cfg.checkpoint = dir / "m.idlm";
  Model a = tiny_model();
  Model b = tiny_model();
  int seen = 0;
  const auto ra = train(blocks, cfg, a, [&](const EpochStats&) { ++seen; });
  cfg.log_csv.reset();
  cfg.checkpoint.reset();
  const auto rb = train(blocks, cfg, b);
  EXPECT_EQ(seen, cfg.epochs);
  ASSERT_EQ(ra.log.size(), static_cast<std::size_t>(cfg.epochs));
  for (std::size_t e = 0; e < ra.log.size(); ++e) EXPECT_EQ(ra.log[e].loss, rb.log[e].loss);
  EXPECT_EQ(model_hash(a), model_hash(b));
  EXPECT_LT(ra.log.back().loss_median, ra.log.front().loss_median);

  std::ifstream csv(dir / "log.csv");
  std::string line;
  int lines = 0;
  std::getline(csv, line);
  EXPECT_EQ(line, "epoch,loss,rate,distortion,loss_median,wall_time");
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, cfg.epochs);
  EXPECT_EQ(model_hash(load_model(dir / "m.idlm")), model_hash(a));
  EXPECT_FALSE(a.parameters()[0].var.requires_grad());
}

TEST(Train, InvalidConfig) {
  Model m = tiny_model();
  TrainConfig cfg;
  cfg.lambda = 0.0;
  EXPECT_IDLAT_ERROR(train(tiny_blocks(1), cfg, m), ErrorCode::kInvalidArgument);
  cfg = {};
  EXPECT_IDLAT_ERROR(train(std::vector<DataBlock>{}, cfg, m), ErrorCode::kInvalidArgument);
}

TEST(Train, DivergenceRestoresLastGoodParameters) {
  Model m = tiny_model();
  ModelHash last = model_hash(m);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr_main = 1e300;
  cfg.lr_entropy = 1e300;
  TempDir dir;
  cfg.checkpoint = dir / "m.idlm";
  EXPECT_IDLAT_ERROR(train(tiny_blocks(2), cfg, m, [&](const EpochStats&) { last = model_hash(m); }),
                     ErrorCode::kDivergence);
  EXPECT_EQ(model_hash(m), last);
  EXPECT_EQ(model_hash(load_model(dir / "m.idlm")), last);
}

}  // namespace
}  // namespace idlat
