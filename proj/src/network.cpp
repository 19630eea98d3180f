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

#include "idlat/network.hpp"

#include <algorithm>
#include <cmath>

#include "idlat/error.hpp"

namespace idlat {

using nn::Shape;
using nn::Tensor;
using nn::Var;

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "leaky_relu";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + s + "'");
}

int ModelConfig::total_stride() const {
  int s = 1;
  for (const auto& l : enc_layers) s *= l.stride;
  return s;
}

int ModelConfig::latent_spatial() const { return padded_edge / total_stride(); }

std::vector<int> ModelConfig::stage_sizes() const {
  std::vector<int> out{padded_edge};
  for (const auto& l : enc_layers) out.push_back(out.back() / l.stride);
  return out;
}

void ModelConfig::validate() const {
  if (enc_layers.empty()) throw Error(ErrorCode::kInvalidArgument, "model needs at least one encoder layer");
  for (const auto& l : enc_layers) {
    if (l.channels < 1 || l.stride < 1) {
      throw Error(ErrorCode::kInvalidArgument, "encoder layers need channels >= 1 and stride >= 1");
    }
  }
  if (latent_channels < 1) throw Error(ErrorCode::kInvalidArgument, "K must be >= 1");
  if (enc_layers.back().channels != latent_channels) {
    throw Error(ErrorCode::kInvalidArgument, "last encoder layer must output K = " +
                                                 std::to_string(latent_channels) + " channels");
  }
  if (padded_edge < 1 || padded_edge % total_stride() != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "product of strides (" + std::to_string(total_stride()) +
                    ") must divide the padded block edge (" + std::to_string(padded_edge) + ")");
  }
  if (cond_channels < 1 || hyper_channels < 1 || hyper_latent < 1) {
    throw Error(ErrorCode::kInvalidArgument, "condition and hyperprior widths must be >= 1");
  }
  if (leaky_slope < 0.0) throw Error(ErrorCode::kInvalidArgument, "leaky slope must be >= 0");
}

Var sft_apply(const Var& f, const SftParams& p) {
  if (f.shape() != p.alpha.shape() || f.shape() != p.beta.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "sft: feature " + nn::shape_string(f.shape()) + ", alpha " +
                                               nn::shape_string(p.alpha.shape()) + ", beta " +
                                               nn::shape_string(p.beta.shape()));
  }
  return nn::add(nn::mul(f, p.alpha), p.beta);
}

double round_symbol(double v) { return std::round(v); }

Var relax_quantize(const Var& y, QuantizeMode mode, std::mt19937_64& rng) {
  Tensor shifted = y.value();
  if (mode == QuantizeMode::kTrain) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& v : shifted.data) v += u(rng);
  } else {
    for (auto& v : shifted.data) v = round_symbol(v);
  }
  // The offset is data-independent for the gradient: d(out)/d(y) = 1.
  return Var::make(std::move(shifted), {y}, [](const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) grads[0]->data[i] += g.data[i];
  });
}

std::vector<std::int32_t> to_symbols(const Tensor& y, QuantizeStats* stats) {
  std::vector<std::int32_t> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double r = round_symbol(y.data[i]);
    if (!std::isfinite(r)) throw Error(ErrorCode::kAlphabet, "non-finite latent value");
    if (r < kSymbolMin || r > kSymbolMax) {
      r = std::clamp<double>(r, kSymbolMin, kSymbolMax);
      if (stats) ++stats->clamped;
    }
    out[i] = static_cast<std::int32_t>(r);
  }
  return out;
}

Tensor from_symbols(const std::vector<std::int32_t>& symbols, const Shape& shape) {
  if (nn::shape_size(shape) != symbols.size()) {
    throw Error(ErrorCode::kShapeMismatch, "symbol count " + std::to_string(symbols.size()) +
                                               " does not fit shape " + nn::shape_string(shape));
  }
  Tensor t(shape);
  for (std::size_t i = 0; i < symbols.size(); ++i) t.data[i] = symbols[i];
  return t;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const auto& layers = config_.enc_layers;
  const int n = static_cast<int>(layers.size());
  const int nc = config_.cond_channels;
  const int K = config_.latent_channels;
  const int hc = config_.hyper_channels;
  const int s = config_.latent_spatial();
  const double act_gain = std::sqrt(2.0);
  using G = Parameter::Group;

  for (int i = 0; i < n; ++i) {
    const int cin = i == 0 ? 1 : layers[i - 1].channels;
    add_conv("enc" + std::to_string(i), cin, layers[i].channels, 3, G::kMain, rng,
             i + 1 < n ? act_gain : 1.0);
    add_conv("cond" + std::to_string(i), i == 0 ? 1 : nc, nc, 3, G::kMain, rng, act_gain);
    add_conv("cond" + std::to_string(i) + ".alpha", nc, layers[i].channels, 1, G::kMain, rng, 0.01);
    add_conv("cond" + std::to_string(i) + ".beta", nc, layers[i].channels, 1, G::kMain, rng, 0.01);
  }
  for (int i = n - 1; i >= 0; --i) {
    const int cin = layers[i].channels;
    const int cout = i == 0 ? 1 : layers[i - 1].channels;
    add_conv("dec" + std::to_string(i), cin, cout, 3, G::kMain, rng, i > 0 ? act_gain : 1.0);
  }
  add_conv("tg0", K, nc, 3, G::kMain, rng, act_gain);
  add_conv("tg1", nc, nc, 3, G::kMain, rng, act_gain);
  for (int i = 1; i < n; ++i) {
    add_conv("tg" + std::to_string(i) + ".alpha", nc, layers[i - 1].channels, 1, G::kMain, rng, 0.01);
    add_conv("tg" + std::to_string(i) + ".beta", nc, layers[i - 1].channels, 1, G::kMain, rng, 0.01);
  }
  add_conv("hyper.enc", K, hc, 3, G::kMain, rng, act_gain);
  add_linear("hyper.enc_lin", hc * s * s * s, config_.hyper_latent, rng);
  add_linear("hyper.dec_lin", config_.hyper_latent, hc * s * s * s, rng);
  add_conv("hyper.dec0", hc, hc, 3, G::kMain, rng, act_gain);
  add_conv("hyper.dec1", hc, 2 * K, 3, G::kMain, rng, 1.0);

  // Modulation starts near identity: alpha ~ 1, beta ~ 0.
  for (auto& p : params_) {
    if (!p.name.ends_with(".alpha.b")) continue;
    auto& b = p.var.mutable_value().data;
    std::fill(b.begin(), b.end(), 1.0);
  }

  Parameter z;
  z.name = "entropy.z";
  z.group = G::kEntropy;
  z.var = Var::leaf(FactorizedDensity::initial_parameters(config_.hyper_latent, rng()), false);
  by_name_[z.name] = params_.size();
  params_.push_back(std::move(z));
}

void Model::add_conv(const std::string& name, int cin, int cout, int kernel, Parameter::Group group,
                     std::mt19937_64& rng, double gain) {
  const int fan_in = cin * kernel * kernel * kernel;
  std::normal_distribution<double> nd(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
  Tensor w({cout, cin, kernel, kernel, kernel});
  for (auto& v : w.data) v = nd(rng);
  by_name_[name + ".w"] = params_.size();
  params_.push_back({name + ".w", group, Var::leaf(std::move(w), false)});
  by_name_[name + ".b"] = params_.size();
  params_.push_back({name + ".b", group, Var::leaf(Tensor({cout}), false)});
}

void Model::add_linear(const std::string& name, int in, int out, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  Tensor w({out, in});
  for (auto& v : w.data) v = nd(rng);
  by_name_[name + ".w"] = params_.size();
  params_.push_back({name + ".w", Parameter::Group::kMain, Var::leaf(std::move(w), false)});
  by_name_[name + ".b"] = params_.size();
  params_.push_back({name + ".b", Parameter::Group::kMain, Var::leaf(Tensor({out}), false)});
}

const Parameter& Model::parameter(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error(ErrorCode::kNotFound, "no parameter '" + name + "'");
  return params_[it->second];
}

Parameter& Model::parameter(const std::string& name) {
  return const_cast<Parameter&>(std::as_const(*this).parameter(name));
}

void Model::set_trainable(bool on) {
  for (auto& p : params_) p.var.set_requires_grad(on);
}

void Model::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

Var Model::conv(const std::string& name, const Var& x, int stride, int kernel) const {
  nn::ConvGeometry g;
  g.kernel = kernel;
  g.stride = stride;
  g.pad = kernel / 2;
  g.mode = nn::PadMode::kReplicate;
  return nn::conv3d(x, parameter(name + ".w").var, parameter(name + ".b").var, g);
}

Var Model::activate(const Var& x) const {
  return nn::leaky_relu(x, config_.activation == Activation::kRelu ? 0.0 : config_.leaky_slope);
}

SftParams Model::heads(const std::string& name, const Var& features) const {
  return {conv(name + ".alpha", features, 1, 1), conv(name + ".beta", features, 1, 1)};
}

std::vector<SftParams> Model::encode_condition(const Var& importance) const {
  const Shape want = block_shape();
  if (importance.shape() != want) {
    throw Error(ErrorCode::kShapeMismatch, "importance block " + nn::shape_string(importance.shape()) +
                                               ", expected " + nn::shape_string(want));
  }
  std::vector<SftParams> out;
  Var c = importance;
  for (std::size_t i = 0; i < config_.enc_layers.size(); ++i) {
    c = activate(conv("cond" + std::to_string(i), c, config_.enc_layers[i].stride, 3));
    out.push_back(heads("cond" + std::to_string(i), c));
  }
  return out;
}

Var Model::encode(const Var& x, const Var& importance) const {
  if (x.shape() != block_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "data block " + nn::shape_string(x.shape()) + ", expected " +
                                               nn::shape_string(block_shape()));
  }
  const auto cond = encode_condition(importance);
  const std::size_t n = config_.enc_layers.size();
  Var h = x;
  for (std::size_t i = 0; i < n; ++i) {
    h = conv("enc" + std::to_string(i), h, config_.enc_layers[i].stride, 3);
    if (i + 1 < n) h = activate(h);
    h = sft_apply(h, cond[i]);
  }
  return h;
}

Var Model::hyper_encode(const Var& y) const {
  if (y.shape() != latent_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "latent " + nn::shape_string(y.shape()) + ", expected " +
                                               nn::shape_string(latent_shape()));
  }
  const Var h = activate(conv("hyper.enc", y, 1, 3));
  return nn::linear(h, parameter("hyper.enc_lin.w").var, parameter("hyper.enc_lin.b").var);
}

std::pair<Var, Var> Model::entropy_params(const Var& z_hat) const {
  if (z_hat.shape() != Shape{config_.hyper_latent}) {
    throw Error(ErrorCode::kShapeMismatch, "side information " + nn::shape_string(z_hat.shape()) +
                                               ", expected (" + std::to_string(config_.hyper_latent) + ")");
  }
  const int s = config_.latent_spatial();
  const int K = config_.latent_channels;
  Var g = activate(nn::linear(z_hat, parameter("hyper.dec_lin.w").var, parameter("hyper.dec_lin.b").var));
  g = nn::reshape(g, {config_.hyper_channels, s, s, s});
  g = activate(conv("hyper.dec0", g, 1, 3));
  const Var p = conv("hyper.dec1", g, 1, 3);
  Var mean = nn::slice_channels(p, 0, K);
  Var scale = nn::lower_bound(nn::softplus(nn::slice_channels(p, K, 2 * K)), kScaleLowerBound);
  return {mean, scale};
}

std::vector<SftParams> Model::decode_condition(const Var& y_hat) const {
  const auto sizes = config_.stage_sizes();
  const int s = config_.latent_spatial();
  Var t = activate(conv("tg0", y_hat, 1, 3));
  t = activate(conv("tg1", t, 1, 3));
  // Entry i (i >= 1) conditions the decoder stage that produces the input
  // resolution of encoder layer i.
  std::vector<SftParams> out(config_.enc_layers.size());
  for (std::size_t i = 1; i < config_.enc_layers.size(); ++i) {
    const int factor = sizes[i] / s;
    const Var up = factor > 1 ? nn::upsample_nearest(t, factor) : t;
    out[i] = heads("tg" + std::to_string(i), up);
  }
  return out;
}

Var Model::decode(const Var& y_hat) const {
  if (y_hat.shape() != latent_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "latent " + nn::shape_string(y_hat.shape()) + ", expected " +
                                               nn::shape_string(latent_shape()));
  }
  const auto cond = decode_condition(y_hat);
  Var d = y_hat;
  for (int i = static_cast<int>(config_.enc_layers.size()) - 1; i >= 0; --i) {
    const int stride = config_.enc_layers[static_cast<std::size_t>(i)].stride;
    if (stride > 1) d = nn::upsample_nearest(d, stride);
    d = conv("dec" + std::to_string(i), d, 1, 3);
    if (i > 0) d = sft_apply(activate(d), cond[static_cast<std::size_t>(i)]);
  }
  return d;
}

Var Model::z_likelihood(const Var& z_hat, LikelihoodStats* stats) const {
  return FactorizedDensity::likelihood(z_hat, parameter("entropy.z").var, stats);
}

Shape Model::latent_shape() const {
  const int s = config_.latent_spatial();
  return {config_.latent_channels, s, s, s};
}

Shape Model::block_shape() const {
  const int p = config_.padded_edge;
  return {1, p, p, p};
}

Tensor Model::encode_block(const DataBlock& block) const {
  const Shape shape = block_shape();
  if (block.values.size() != nn::shape_size(shape) || block.importance.size() != block.values.size()) {
    throw Error(ErrorCode::kShapeMismatch, "block " + to_string(block.index) + " has edge " +
                                               std::to_string(block.edge) + ", model expects " +
                                               std::to_string(config_.padded_edge));
  }
  const Var x = Var::constant(Tensor(shape, block.values));
  const Var imp = Var::constant(Tensor(shape, block.importance));
  return encode(x, imp).value();
}

LatentBlock Model::compress_block(const DataBlock& block, QuantizeStats* stats) const {
  LatentBlock out;
  out.index = block.index;
  const Tensor y = encode_block(block);
  out.y_symbols = to_symbols(y, stats);
  const Tensor z = hyper_encode(Var::constant(y)).value();
  out.z_symbols = to_symbols(z, stats);
  return out;
}

Tensor Model::decode_symbols(const std::vector<std::int32_t>& y_symbols) const {
  return decode(Var::constant(from_symbols(y_symbols, latent_shape()))).value();
}

std::pair<Tensor, Tensor> Model::y_distribution(const std::vector<std::int32_t>& z_symbols) const {
  auto [mean, scale] = entropy_params(Var::constant(from_symbols(z_symbols, {config_.hyper_latent})));
  return {mean.value(), scale.value()};
}

std::vector<double> Model::z_pmf(int channel) const {
  const auto& t = parameter("entropy.z").var.value();
  if (channel < 0 || channel >= t.dim(0)) {
    throw Error(ErrorCode::kInvalidArgument, "no side-information channel " + std::to_string(channel));
  }
  return FactorizedDensity::pmf(std::span<const double>(
      t.data.data() + static_cast<std::size_t>(channel) * FactorizedDensity::kParamsPerChannel,
      FactorizedDensity::kParamsPerChannel));
}

}  // namespace idlat
