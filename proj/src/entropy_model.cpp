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

#include "idlat/entropy_model.hpp"

#include <array>
#include <cmath>
#include <random>

#include "idlat/error.hpp"

namespace idlat {
namespace {

constexpr std::array<int, 5> kWidths = {1, 3, 3, 3, 1};
constexpr int kLayers = 4;

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }
double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }
double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double softplus(double t) { return t > 30.0 ? t : std::log1p(std::exp(t)); }

struct LayerOffsets {
  int h, b, a;  // a == -1 for the last layer
};

constexpr std::array<LayerOffsets, kLayers> layer_offsets() {
  std::array<LayerOffsets, kLayers> out{};
  int off = 0;
  for (int k = 0; k < kLayers; ++k) {
    const int rows = kWidths[k + 1], cols = kWidths[k];
    out[k].h = off;
    off += rows * cols;
    out[k].b = off;
    off += rows;
    if (k < kLayers - 1) {
      out[k].a = off;
      off += rows;
    } else {
      out[k].a = -1;
    }
  }
  return out;
}

constexpr auto kOffsets = layer_offsets();
static_assert(kOffsets[3].b + 1 == FactorizedDensity::kParamsPerChannel);

}  // namespace

double gaussian_bin_probability(double x, double mean, double scale) {
  const double v = std::abs(x - mean);
  return normal_cdf((0.5 - v) / scale) - normal_cdf((-0.5 - v) / scale);
}

std::vector<double> gaussian_symbol_pmf(double mean, double scale) {
  std::vector<double> pmf(kAlphabetSize);
  for (int s = kSymbolMin; s <= kSymbolMax; ++s) {
    double p;
    if (s == kSymbolMin) {
      p = normal_cdf((s + 0.5 - mean) / scale);
    } else if (s == kSymbolMax) {
      p = normal_cdf(-(s - 0.5 - mean) / scale);
    } else {
      p = gaussian_bin_probability(s, mean, scale);
    }
    pmf[s - kSymbolMin] = p;
  }
  return pmf;
}

nn::Var gaussian_likelihood(const nn::Var& y, const nn::Var& mean, const nn::Var& scale,
                            LikelihoodStats* stats) {
  if (y.shape() != mean.shape() || y.shape() != scale.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "gaussian likelihood: y, mean and scale shapes differ");
  }
  const auto& yv = y.value().data;
  const auto& mv = mean.value().data;
  const auto& sv = scale.value().data;
  nn::Tensor p(y.shape());
  // Raw (unclamped) likelihood and partials dp/dv, dp/dscale, sign(y - mean).
  nn::Tensor raw(y.shape()), dpdv(y.shape()), dpds(y.shape()), sign(y.shape());
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double d = yv[i] - mv[i];
    const double v = std::abs(d);
    const double s = sv[i];
    const double a = (0.5 - v) / s;
    const double b = (-0.5 - v) / s;
    raw.data[i] = normal_cdf(a) - normal_cdf(b);
    dpdv.data[i] = (normal_pdf(b) - normal_pdf(a)) / s;
    dpds.data[i] = (b * normal_pdf(b) - a * normal_pdf(a)) / s;
    sign.data[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    p.data[i] = std::max(raw.data[i], kLikelihoodFloor);
    if (stats && raw.data[i] < kLikelihoodFloor) ++stats->clamped;
  }
  return nn::Var::make(
      std::move(p), {y, mean, scale},
      [raw, dpdv, dpds, sign](const nn::Tensor& g, std::span<nn::Tensor* const> grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (raw.data[i] < kLikelihoodFloor && g.data[i] >= 0.0) continue;
          const double gv = g.data[i] * dpdv.data[i] * sign.data[i];
          if (grads[0]) grads[0]->data[i] += gv;
          if (grads[1]) grads[1]->data[i] -= gv;
          if (grads[2]) grads[2]->data[i] += g.data[i] * dpds.data[i];
        }
      });
}

nn::Tensor FactorizedDensity::initial_parameters(int channels, std::uint64_t seed, double init_scale) {
  nn::Tensor t({channels, kParamsPerChannel});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  const double scale = std::pow(init_scale, 1.0 / (kLayers));
  for (int c = 0; c < channels; ++c) {
    double* p = t.data.data() + static_cast<std::size_t>(c) * kParamsPerChannel;
    for (int k = 0; k < kLayers; ++k) {
      const int rows = kWidths[k + 1], cols = kWidths[k];
      const double h_init = std::log(std::expm1(1.0 / scale / rows));
      for (int i = 0; i < rows * cols; ++i) p[kOffsets[k].h + i] = h_init;
      for (int i = 0; i < rows; ++i) p[kOffsets[k].b + i] = bias(rng);
      if (kOffsets[k].a >= 0) {
        for (int i = 0; i < rows; ++i) p[kOffsets[k].a + i] = 0.0;
      }
    }
  }
  return t;
}

double FactorizedDensity::logit(std::span<const double> params, double x, double* dx,
                                std::span<double> dparams, double upstream) {
  // Activations: v[k] is the input of layer k, u[k] its affine output.
  std::array<std::array<double, 3>, kLayers + 1> v{};
  std::array<std::array<double, 3>, kLayers> u{};
  v[0][0] = x;
  for (int k = 0; k < kLayers; ++k) {
    const int rows = kWidths[k + 1], cols = kWidths[k];
    for (int r = 0; r < rows; ++r) {
      double acc = params[kOffsets[k].b + r];
      for (int c = 0; c < cols; ++c) acc += softplus(params[kOffsets[k].h + r * cols + c]) * v[k][c];
      u[k][r] = acc;
      v[k + 1][r] = kOffsets[k].a >= 0 ? acc + std::tanh(params[kOffsets[k].a + r]) * std::tanh(acc) : acc;
    }
  }
  const double out = v[kLayers][0];
  if (dx == nullptr && dparams.empty()) return out;

  std::array<double, 3> gv{upstream, 0.0, 0.0};  // gradient w.r.t. v[k + 1]
  for (int k = kLayers - 1; k >= 0; --k) {
    const int rows = kWidths[k + 1], cols = kWidths[k];
    std::array<double, 3> gu{};
    for (int r = 0; r < rows; ++r) {
      if (kOffsets[k].a >= 0) {
        const double ta = std::tanh(params[kOffsets[k].a + r]);
        const double tu = std::tanh(u[k][r]);
        gu[r] = gv[r] * (1.0 + ta * (1.0 - tu * tu));
        if (!dparams.empty()) dparams[kOffsets[k].a + r] += gv[r] * tu * (1.0 - ta * ta);
      } else {
        gu[r] = gv[r];
      }
    }
    std::array<double, 3> gin{};
    for (int r = 0; r < rows; ++r) {
      if (!dparams.empty()) dparams[kOffsets[k].b + r] += gu[r];
      for (int c = 0; c < cols; ++c) {
        const double hraw = params[kOffsets[k].h + r * cols + c];
        if (!dparams.empty()) dparams[kOffsets[k].h + r * cols + c] += gu[r] * v[k][c] * sigmoid(hraw);
        gin[c] += softplus(hraw) * gu[r];
      }
    }
    gv = gin;
  }
  if (dx) *dx = gv[0];
  return out;
}

nn::Var FactorizedDensity::likelihood(const nn::Var& z, const nn::Var& params, LikelihoodStats* stats) {
  const auto& ps = params.shape();
  if (ps.size() != 2 || ps[1] != kParamsPerChannel || z.shape().empty() || z.shape()[0] != ps[0]) {
    throw Error(ErrorCode::kShapeMismatch, "factorized density: z " + nn::shape_string(z.shape()) +
                                               " does not match params " + nn::shape_string(ps));
  }
  const int channels = ps[0];
  const std::size_t per = z.value().size() / static_cast<std::size_t>(channels);
  nn::Tensor p(z.shape()), raw(z.shape());
  for (int c = 0; c < channels; ++c) {
    std::span<const double> pc(params.value().data.data() + static_cast<std::size_t>(c) * kParamsPerChannel,
                               kParamsPerChannel);
    for (std::size_t e = 0; e < per; ++e) {
      const std::size_t i = c * per + e;
      const double x = z.value().data[i];
      const double up = logit(pc, x + 0.5);
      const double lo = logit(pc, x - 0.5);
      raw.data[i] = up + lo > 0.0 ? sigmoid(-lo) - sigmoid(-up) : sigmoid(up) - sigmoid(lo);
      p.data[i] = std::max(raw.data[i], kLikelihoodFloor);
      if (stats && raw.data[i] < kLikelihoodFloor) ++stats->clamped;
    }
  }
  return nn::Var::make(
      std::move(p), {z, params},
      [raw, zv = z.value(), pv = params.value(), channels, per](const nn::Tensor& g,
                                                               std::span<nn::Tensor* const> grads) {
        for (int c = 0; c < channels; ++c) {
          const std::size_t off = static_cast<std::size_t>(c) * kParamsPerChannel;
          std::span<const double> pc(pv.data.data() + off, kParamsPerChannel);
          std::span<double> dpc;
          if (grads[1]) dpc = std::span<double>(grads[1]->data.data() + off, kParamsPerChannel);
          for (std::size_t e = 0; e < per; ++e) {
            const std::size_t i = c * per + e;
            if (raw.data[i] < kLikelihoodFloor && g.data[i] >= 0.0) continue;
            const double x = zv.data[i];
            const double up = logit(pc, x + 0.5);
            const double lo = logit(pc, x - 0.5);
            // dp/dup = sigmoid'(up), dp/dlo = -sigmoid'(lo) on either branch.
            const double su = sigmoid(up), sl = sigmoid(lo);
            const double g_up = g.data[i] * su * (1.0 - su);
            const double g_lo = -g.data[i] * sl * (1.0 - sl);
            double dx_up = 0.0, dx_lo = 0.0;
            logit(pc, x + 0.5, &dx_up, dpc, g_up);
            logit(pc, x - 0.5, &dx_lo, dpc, g_lo);
            if (grads[0]) grads[0]->data[i] += dx_up + dx_lo;
          }
        }
      });
}

std::vector<double> FactorizedDensity::pmf(std::span<const double> params) {
  std::vector<double> out(kAlphabetSize);
  for (int s = kSymbolMin; s <= kSymbolMax; ++s) {
    const double up = logit(params, s + 0.5);
    const double lo = logit(params, s - 0.5);
    double p;
    if (s == kSymbolMin) {
      p = sigmoid(up);
    } else if (s == kSymbolMax) {
      p = sigmoid(-lo);
    } else {
      p = up + lo > 0.0 ? sigmoid(-lo) - sigmoid(-up) : sigmoid(up) - sigmoid(lo);
    }
    out[s - kSymbolMin] = std::max(p, 0.0);
  }
  return out;
}

}  // namespace idlat
