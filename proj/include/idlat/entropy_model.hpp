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

#include <cstddef>
#include <span>
#include <vector>

#include "idlat/nn/autograd.hpp"

namespace idlat {

/// Integer alphabet shared by latent and side-information symbols.
inline constexpr int kSymbolMin = -127;
inline constexpr int kSymbolMax = 127;
inline constexpr int kAlphabetSize = kSymbolMax - kSymbolMin + 1;

inline constexpr double kScaleLowerBound = 1e-6;
inline constexpr double kLikelihoodFloor = 1e-9;

/// Mass of the unit-width bin centred on `x` under N(mean, scale^2):
/// Phi((x + 1/2 - mean) / scale) - Phi((x - 1/2 - mean) / scale), evaluated on
/// the tail nearest to zero for accuracy.
double gaussian_bin_probability(double x, double mean, double scale);

/// Discrete distribution of an integer symbol over [kSymbolMin, kSymbolMax]
/// with the out-of-range tails folded into the end symbols.
std::vector<double> gaussian_symbol_pmf(double mean, double scale);

struct LikelihoodStats {
  std::size_t clamped = 0;
};

/// Differentiable bin likelihoods of `y` (noisy or rounded) under per-element
/// Gaussians. Values below kLikelihoodFloor are clamped and counted.
nn::Var gaussian_likelihood(const nn::Var& y, const nn::Var& mean, const nn::Var& scale,
                            LikelihoodStats* stats = nullptr);

/// Learned non-parametric density, one per channel: a monotone cumulative
/// built from softplus-positive matrices and tanh gates with filter widths
/// (1, 3, 3, 3, 1).
struct FactorizedDensity {
  static constexpr int kParamsPerChannel = 43;

  /// Initial parameters for `channels` channels, shape (channels, 43).
  static nn::Tensor initial_parameters(int channels, std::uint64_t seed, double init_scale = 10.0);

  /// Cumulative logit of channel `c` at `x`, and its derivative w.r.t. x and
  /// the channel parameters (when `dparams` is non-null).
  static double logit(std::span<const double> params, double x, double* dx = nullptr,
                      std::span<double> dparams = {}, double upstream = 1.0);

  /// Bin likelihoods for z with shape (C) or (C, ...), params (C, 43).
  static nn::Var likelihood(const nn::Var& z, const nn::Var& params, LikelihoodStats* stats = nullptr);

  /// Discrete pmf of channel `c` over the symbol alphabet.
  static std::vector<double> pmf(std::span<const double> params);
};

}  // namespace idlat
