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

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "idlat/blocking.hpp"
#include "idlat/entropy_model.hpp"
#include "idlat/nn/ops.hpp"
#include "idlat/volume.hpp"

namespace idlat {

enum class Activation { kRelu, kLeakyRelu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct LayerSpec {
  int channels = 0;
  int stride = 1;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelConfig {
  int latent_channels = 8;  // K; must equal the last encoder layer's channels
  std::vector<LayerSpec> enc_layers = {{32, 2}, {64, 2}, {8, 2}};
  int padded_edge = 24;
  int cond_channels = 16;
  int hyper_channels = 16;
  int hyper_latent = 8;  // side-information symbols per block
  Activation activation = Activation::kLeakyRelu;
  double leaky_slope = 0.01;
  std::uint64_t seed = 0;

  int total_stride() const;
  /// Per-axis latent size s.
  int latent_spatial() const;
  /// Spatial size after each encoder layer (size enc_layers + 1, starting
  /// with the padded edge).
  std::vector<int> stage_sizes() const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct SftParams {
  nn::Var alpha;
  nn::Var beta;
};

/// F * alpha + beta, elementwise. Shapes must match exactly.
nn::Var sft_apply(const nn::Var& f, const SftParams& p);

enum class QuantizeMode { kTrain, kEval };

/// Round half away from zero.
double round_symbol(double v);

/// Train mode adds i.i.d. U(-1/2, 1/2) noise; eval mode rounds with a
/// straight-through gradient.
nn::Var relax_quantize(const nn::Var& y, QuantizeMode mode, std::mt19937_64& rng);

struct QuantizeStats {
  std::size_t clamped = 0;
};

/// Rounds and clamps into the symbol alphabet.
std::vector<std::int32_t> to_symbols(const nn::Tensor& y, QuantizeStats* stats = nullptr);
nn::Tensor from_symbols(const std::vector<std::int32_t>& symbols, const nn::Shape& shape);

struct LatentBlock {
  BlockIndex index;
  std::vector<std::int32_t> y_symbols;  // K * s^3
  std::vector<std::int32_t> z_symbols;  // hyper_latent
};

/// A trainable parameter tensor with its optimizer group.
struct Parameter {
  enum class Group { kMain, kEntropy };
  std::string name;
  Group group = Group::kMain;
  nn::Var var;
};

/// The importance-conditioned autoencoder with its hyperprior entropy model.
/// Parameters are graph leaves; gradients are tracked only while the model
/// is trainable.
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter& parameter(const std::string& name) const;
  Parameter& parameter(const std::string& name);

  void set_trainable(bool on);
  void zero_grad();

  NormalizationParams normalization;
  BlockSpec block_spec{};

  /// Condition network: one (alpha, beta) pair per encoder layer, shaped like
  /// that layer's output. `importance` has shape (1, P, P, P).
  std::vector<SftParams> encode_condition(const nn::Var& importance) const;
  /// y = f(x, T_f(I)). x and importance have shape (1, P, P, P).
  nn::Var encode(const nn::Var& x, const nn::Var& importance) const;
  /// Side information z, shape (hyper_latent).
  nn::Var hyper_encode(const nn::Var& y) const;
  /// Per-dimension Gaussian mean and scale (scale >= kScaleLowerBound) for y.
  std::pair<nn::Var, nn::Var> entropy_params(const nn::Var& z_hat) const;
  /// Decoder conditions derived from the latent alone.
  std::vector<SftParams> decode_condition(const nn::Var& y_hat) const;
  /// Reconstruction of the padded block, shape (1, P, P, P).
  nn::Var decode(const nn::Var& y_hat) const;
  /// Factorized bin likelihoods of z_hat.
  nn::Var z_likelihood(const nn::Var& z_hat, LikelihoodStats* stats = nullptr) const;

  // Inference helpers on plain tensors (no graph).
  nn::Tensor encode_block(const DataBlock& block) const;
  LatentBlock compress_block(const DataBlock& block, QuantizeStats* stats = nullptr) const;
  nn::Tensor decode_symbols(const std::vector<std::int32_t>& y_symbols) const;
  /// Gaussian (mean, scale) per y element for decoded side information.
  std::pair<nn::Tensor, nn::Tensor> y_distribution(const std::vector<std::int32_t>& z_symbols) const;
  /// Discrete pmf of side-information channel c.
  std::vector<double> z_pmf(int channel) const;

  nn::Shape latent_shape() const;
  nn::Shape block_shape() const;

 private:
  void add_conv(const std::string& name, int cin, int cout, int kernel, Parameter::Group group,
                std::mt19937_64& rng, double gain = 1.0);
  void add_linear(const std::string& name, int in, int out, std::mt19937_64& rng);
  nn::Var conv(const std::string& name, const nn::Var& x, int stride, int kernel) const;
  nn::Var activate(const nn::Var& x) const;
  SftParams heads(const std::string& name, const nn::Var& features) const;

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

}  // namespace idlat
