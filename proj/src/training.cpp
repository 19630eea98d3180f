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

#include "idlat/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "idlat/checkpoint.hpp"
#include "idlat/error.hpp"
#include "idlat/importance.hpp"

namespace idlat {

using nn::Tensor;
using nn::Var;

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be > 0");
  if (!(lr_main > 0.0) || !(lr_entropy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rates must be > 0");
  }
  if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (!std::isfinite(a)) throw Error(ErrorCode::kInvalidArgument, "a must be finite");
  if (!(clip_norm >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "clip norm must be >= 0");
}

Tensor distortion_weights(const Tensor& importance, double a, std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != importance.size()) {
    throw Error(ErrorCode::kShapeMismatch, "mask size differs from importance size");
  }
  Tensor w(importance.shape);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.data[i] = mask.empty() || mask[i] ? std::exp(a * importance.data[i]) : 0.0;
  }
  return w;
}

Var distortion_loss(const Tensor& x, const Var& x_tilde, const Tensor& importance, double a,
                    std::span<const std::uint8_t> mask) {
  if (x.shape != x_tilde.shape() || importance.shape != x.shape) {
    throw Error(ErrorCode::kShapeMismatch, "distortion: x " + nn::shape_string(x.shape) + ", x~ " +
                                               nn::shape_string(x_tilde.shape()) + ", I " +
                                               nn::shape_string(importance.shape));
  }
  return nn::weighted_sse(x, x_tilde, distortion_weights(importance, a, mask));
}

Var rate_loss(std::span<const Var> likelihoods, LikelihoodStats* stats) {
  Var total = Var::constant(Tensor({1}, 0.0));
  for (const auto& p : likelihoods) {
    for (double v : p.value().data) {
      if (std::isnan(v)) throw Error(ErrorCode::kDivergence, "likelihood is NaN");
      if (v > 1.0 + 1e-12) throw Error(ErrorCode::kInvalidArgument, "likelihood above 1");
      if (v < kLikelihoodFloor && stats) ++stats->clamped;
    }
    total = nn::add(total, nn::neg_log2_sum(nn::lower_bound(p, kLikelihoodFloor)));
  }
  return total;
}

LossTerms total_loss(const Var& rate, const Var& distortion, double lambda) {
  LossTerms t{nn::add(rate, nn::scale(distortion, lambda)), rate, distortion};
  const double v = t.total.value().data[0];
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kDivergence, "non-finite loss (rate " + std::to_string(rate.value().data[0]) +
                                            ", distortion " + std::to_string(distortion.value().data[0]) + ")");
  }
  return t;
}

LossTerms total_loss(const Tensor& x, const Var& x_tilde, std::span<const Var> likelihoods,
                     const Tensor& importance, const TrainConfig& cfg, std::span<const std::uint8_t> mask) {
  return total_loss(rate_loss(likelihoods), distortion_loss(x, x_tilde, importance, cfg.a, mask), cfg.lambda);
}

ForwardResult forward_block(const Model& model, const DataBlock& block, std::span<const double> importance,
                            const TrainConfig& cfg, std::mt19937_64& rng) {
  const auto shape = model.block_shape();
  const int edge = model.config().padded_edge;
  const int c = model.block_spec.content;
  const int pad = model.block_spec.pad;
  if (block.values.size() != nn::shape_size(shape) || importance.size() != block.values.size()) {
    throw Error(ErrorCode::kShapeMismatch, "training block " + to_string(block.index) + " does not match the model");
  }
  const Var x = Var::constant(Tensor(shape, block.values));
  const Var imp = Var::constant(Tensor(shape, std::vector<double>(importance.begin(), importance.end())));

  const Var y = model.encode(x, imp);
  const Var y_tilde = relax_quantize(y, QuantizeMode::kTrain, rng);
  const Var z = model.hyper_encode(y);
  const Var z_tilde = relax_quantize(z, QuantizeMode::kTrain, rng);
  const auto [mean, scale] = model.entropy_params(z_tilde);
  LikelihoodStats ls;
  const std::vector<Var> likelihoods = {gaussian_likelihood(y_tilde, mean, scale, &ls),
                                        model.z_likelihood(z_tilde, &ls)};
  const Var x_tilde = model.decode(y_tilde);

  // Content region, restricted to in-domain valid voxels.
  Tensor target({1, c, c, c}), imp_crop({1, c, c, c});
  std::vector<std::uint8_t> keep(target.size(), 0);
  std::size_t n = 0;
  for (int zz = 0; zz < c; ++zz)
    for (int yy = 0; yy < c; ++yy)
      for (int xx = 0; xx < c; ++xx, ++n) {
        const auto src = linear_index({edge, edge, edge}, xx + pad, yy + pad, zz + pad);
        target.data[n] = block.values[src];
        imp_crop.data[n] = importance[src];
        const bool inside = xx < block.valid_extent[0] && yy < block.valid_extent[1] && zz < block.valid_extent[2];
        keep[n] = inside && (block.mask.empty() || block.mask[src]) ? 1 : 0;
      }
  const Var crop = nn::center_crop(x_tilde, pad, c);
  ForwardResult r;
  r.loss = total_loss(rate_loss(likelihoods), distortion_loss(target, crop, imp_crop, cfg.a, keep), cfg.lambda);
  r.x_tilde = x_tilde;
  r.clamped = ls.clamped;
  return r;
}

double clip_gradients(std::vector<Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.var.grad().data) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.var.mutable_grad().data) g *= f;
    }
  }
  return norm;
}

void Adam::step(std::vector<Parameter>& params, double lr_main, double lr_entropy) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.var.value().shape);
      v_.emplace_back(p.var.value().shape);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const Tensor& g = p.var.grad();
    if (g.empty()) continue;
    const double lr = p.group == Parameter::Group::kMain ? lr_main : lr_entropy;
    auto& w = p.var.mutable_value().data;
    auto& m = m_[k].data;
    auto& v = v_[k].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g.data[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g.data[i] * g.data[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

std::vector<Tensor> snapshot(const Model& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.var.value());
  return out;
}

void restore(Model& m, const std::vector<Tensor>& s) {
  for (std::size_t i = 0; i < s.size(); ++i) m.parameters()[i].var.mutable_value() = s[i];
}

bool parameters_finite(const Model& m) {
  for (const auto& p : m.parameters()) {
    for (double v : p.var.value().data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TrainResult train(std::span<const DataBlock> blocks, const TrainConfig& cfg, Model& model,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (blocks.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  const int edge = model.config().padded_edge;
  if (model.block_spec.padded_edge() != edge) {
    throw Error(ErrorCode::kInvalidArgument, "model block spec does not match its padded edge");
  }
  const Dims block_dims{edge, edge, edge};

  std::ofstream csv;
  if (cfg.log_csv) {
    csv.open(*cfg.log_csv);
    if (!csv) throw Error(ErrorCode::kIo, "cannot write training log " + cfg.log_csv->string());
    csv << "epoch,loss,rate,distortion,loss_median,wall_time\n";
  }

  std::mt19937_64 rng(cfg.seed);
  Adam adam;
  TrainResult result;
  auto last_good = snapshot(model);
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(blocks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto diverged = [&](const std::string& why) {
    restore(model, last_good);
    model.set_trainable(false);
    if (cfg.checkpoint) save_model(model, *cfg.checkpoint);
    throw Error(ErrorCode::kDivergence, why + "; restored parameters of the last completed epoch");
  };

  model.set_trainable(true);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> losses;
    double rate_sum = 0.0, dist_sum = 0.0;
    std::size_t clamped = 0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(cfg.batch_size));
      model.zero_grad();
      for (std::size_t s = first; s < last; ++s) {
        const DataBlock& block = blocks[order[s]];
        const SynthKind kind = kAllSynthKinds[rng() % kAllSynthKinds.size()];
        Volume local;
        local.dims = block_dims;
        local.values = block.values;
        local.mask = block.mask;
        if (!local.mask.empty() && std::all_of(local.mask.begin(), local.mask.end(), [](auto m) { return m != 0; })) {
          local.mask.clear();
        }
        const ImportanceMap map = synth_training_map(block_dims, kind, rng(), &local);
        ForwardResult fr;
        try {
          fr = forward_block(model, block, map.values, cfg, rng);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::kDivergence) diverged(e.what());
          throw;
        }
        nn::backward(nn::scale(fr.loss.total, 1.0 / static_cast<double>(last - first)));
        losses.push_back(fr.loss.total.value().data[0]);
        rate_sum += fr.loss.rate.value().data[0];
        dist_sum += fr.loss.distortion.value().data[0];
        clamped += fr.clamped;
      }
      if (!std::isfinite(clip_gradients(model.parameters(), cfg.clip_norm))) diverged("non-finite gradients");
      adam.step(model.parameters(), cfg.lr_main, cfg.lr_entropy);
      if (!parameters_finite(model)) diverged("non-finite parameters after an update");
    }
    model.zero_grad();

    EpochStats st;
    st.epoch = epoch;
    const double n = static_cast<double>(losses.size());
    for (double l : losses) st.loss += l / n;
    st.rate = rate_sum / n;
    st.distortion = dist_sum / n;
    st.loss_median = median(losses);
    st.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    st.clamped = clamped;
    result.log.push_back(st);
    last_good = snapshot(model);
    spdlog::info("epoch {} loss {:.4f} (rate {:.3f} bits, distortion {:.5f}) median {:.4f} [{:.1f}s]", epoch,
                 st.loss, st.rate, st.distortion, st.loss_median, st.wall_time);
    if (clamped > 0) spdlog::warn("epoch {}: {} likelihoods clamped at the floor", epoch, clamped);
    if (csv) {
      csv << epoch << ',' << st.loss << ',' << st.rate << ',' << st.distortion << ',' << st.loss_median << ','
          << st.wall_time << '\n';
      csv.flush();
    }
    if (cfg.checkpoint) {
      model.set_trainable(false);
      save_model(model, *cfg.checkpoint);
      model.set_trainable(true);
    }
    if (on_epoch) on_epoch(st);
  }
  model.set_trainable(false);
  return result;
}

}  // namespace idlat
