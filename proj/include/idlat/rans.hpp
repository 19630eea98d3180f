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
#include <span>
#include <vector>

namespace idlat::rans {

inline constexpr int kPrecisionBits = 16;
inline constexpr std::uint32_t kTotal = 1u << kPrecisionBits;

/// Static symbol distribution quantized to integer frequencies summing to
/// kTotal. Every symbol keeps a frequency of at least 1 so any symbol of the
/// alphabet stays decodable.
class FrequencyTable {
 public:
  /// Quantizes `pmf` (non-negative, sum 1 within 1e-6). Deterministic: the
  /// remainder after flooring goes to the largest fractional parts, ties to
  /// the lower index.
  static FrequencyTable from_pmf(std::span<const double> pmf);

  int size() const { return static_cast<int>(freq_.size()); }
  std::uint32_t freq(int s) const { return freq_[static_cast<std::size_t>(s)]; }
  std::uint32_t cum(int s) const { return cum_[static_cast<std::size_t>(s)]; }
  /// Symbol whose cumulative interval holds `slot` (< kTotal).
  int lookup(std::uint32_t slot) const;
  /// Model probability freq / kTotal.
  double probability(int s) const { return freq(s) / static_cast<double>(kTotal); }

 private:
  std::vector<std::uint32_t> freq_;
  std::vector<std::uint32_t> cum_;  // size + 1 entries
};

/// rANS with a 32-bit state and 16-bit renormalization. Symbol i is coded
/// with tables[i]. The stream is the 4-byte final state followed by 16-bit
/// words, little-endian.
std::vector<std::uint8_t> encode(std::span<const int> symbols,
                                 std::span<const FrequencyTable* const> tables);

/// Decodes symbols.size() symbols. Throws kTruncated when the stream ends
/// early and kFormat when it does not end in the initial coder state.
std::vector<int> decode(std::span<const std::uint8_t> bytes,
                        std::span<const FrequencyTable* const> tables);

}  // namespace idlat::rans
