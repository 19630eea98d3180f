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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "idlat/blocking.hpp"
#include "idlat/entropy_model.hpp"
#include "idlat/network.hpp"

namespace idlat {

struct TrainConfig {
  double lambda = 0.01;     // rate-distortion trade-off, L = L_R + lambda * L_D
  double a = 3.0;           // distortion weight exponent, w = exp(a * I)
  double lr_main = 1e-4;
  double lr_entropy = 1e-3;
  int epochs = 50;
  int batch_size = 8;
  double clip_norm = 1.0;   // global gradient norm cap per step; 0 disables
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> checkpoint;  // rewritten after every epoch
  std::optional<std::filesystem::path> log_csv;

  void validate() const;
};

/// w_i = exp(a * I_i), forced to 0 where `mask` (if non-empty) is 0.
nn::Tensor distortion_weights(const nn::Tensor& importance, double a, std::span<const std::uint8_t> mask = {});

/// L_D = sum_i w_i (x_i - x~_i)^2 with w_i = exp(a * I_i); masked voxels get w_i = 0.
nn::Var distortion_loss(const nn::Tensor& x, const nn::Var& x_tilde, const nn::Tensor& importance, double a,
                        std::span<const std::uint8_t> mask = {});

/// L_R = sum over all likelihood tensors of -log2 p. Values below
/// kLikelihoodFloor are clamped and counted.
nn::Var rate_loss(std::span<const nn::Var> likelihoods, LikelihoodStats* stats = nullptr);

struct LossTerms {
  nn::Var total;
  nn::Var rate;
  nn::Var distortion;
};

/// L = L_R + lambda * L_D. Throws kDivergence when the result is not finite.
LossTerms total_loss(const nn::Var& rate, const nn::Var& distortion, double lambda);

LossTerms total_loss(const nn::Tensor& x, const nn::Var& x_tilde, std::span<const nn::Var> likelihoods,
                     const nn::Tensor& importance, const TrainConfig& cfg,
                     std::span<const std::uint8_t> mask = {});

/// One forward pass of the model on a block with the given importance map,
/// using noise-relaxed quantization. Distortion covers the in-domain content
/// region only.
struct ForwardResult {
  LossTerms loss;
  nn::Var x_tilde;
  std::size_t clamped = 0;
};
ForwardResult forward_block(const Model& model, const DataBlock& block, std::span<const double> importance,
                            const TrainConfig& cfg, std::mt19937_64& rng);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(std::vector<Parameter>& params, double max_norm);

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::vector<Parameter>& params, double lr_main, double lr_entropy);

 private:
  double b1_, b2_, eps_;
  long t_ = 0;
  std::vector<nn::Tensor> m_, v_;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;        // mean over samples
  double rate = 0.0;
  double distortion = 0.0;
  double loss_median = 0.0;
  double wall_time = 0.0;   // seconds since training started
  std::size_t clamped = 0;
};

struct TrainResult {
  std::vector<EpochStats> log;
};

/// Rate-distortion training. Every epoch each block gets a freshly
/// synthesized importance map (kind drawn uniformly from kAllSynthKinds).
/// On a non-finite loss the parameters of the last completed epoch are
/// restored (and saved when a checkpoint path is set) before kDivergence is
/// thrown.
TrainResult train(std::span<const DataBlock> blocks, const TrainConfig& cfg, Model& model,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace idlat
