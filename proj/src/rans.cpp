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

#include "idlat/rans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "idlat/error.hpp"

namespace idlat::rans {
namespace {

constexpr std::uint32_t kLow = 1u << 16;  // lower bound of the normalized state

}  // namespace

FrequencyTable FrequencyTable::from_pmf(std::span<const double> pmf) {
  const std::size_t n = pmf.size();
  if (n == 0 || n > kTotal) {
    throw Error(ErrorCode::kInvalidArgument, "pmf size must be in [1, 65536], got " + std::to_string(n));
  }
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorCode::kInvalidArgument, "pmf has a negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "pmf sums to " + std::to_string(total) + ", expected 1");
  }
  FrequencyTable t;
  t.freq_.resize(n);
  const double spare = static_cast<double>(kTotal - n);
  std::vector<double> frac(n);
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = pmf[i] / total * spare;
    const double whole = std::floor(share);
    t.freq_[i] = 1 + static_cast<std::uint32_t>(whole);
    frac[i] = share - whole;
    used += t.freq_[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // Floors never overshoot, and the shortfall is below n.
  for (std::size_t r = 0; used < kTotal; ++r, ++used) ++t.freq_[order[r % n]];
  t.cum_.resize(n + 1);
  t.cum_[0] = 0;
  for (std::size_t i = 0; i < n; ++i) t.cum_[i + 1] = t.cum_[i] + t.freq_[i];
  return t;
}

int FrequencyTable::lookup(std::uint32_t slot) const {
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), slot);
  return static_cast<int>(it - cum_.begin()) - 1;
}

std::vector<std::uint8_t> encode(std::span<const int> symbols, std::span<const FrequencyTable* const> tables) {
  if (symbols.size() != tables.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one frequency table per symbol required");
  }
  std::vector<std::uint16_t> words;
  std::uint32_t x = kLow;
  for (std::size_t i = symbols.size(); i-- > 0;) {
    const auto& t = *tables[i];
    const int s = symbols[i];
    if (s < 0 || s >= t.size()) {
      throw Error(ErrorCode::kAlphabet, "symbol " + std::to_string(s) + " at position " + std::to_string(i) +
                                            " outside alphabet of size " + std::to_string(t.size()));
    }
    const std::uint32_t f = t.freq(s);
    const std::uint64_t x_max = static_cast<std::uint64_t>(kLow >> kPrecisionBits << 16) * f;
    while (x >= x_max) {
      words.push_back(static_cast<std::uint16_t>(x & 0xffff));
      x >>= 16;
    }
    x = ((x / f) << kPrecisionBits) + (x % f) + t.cum(s);
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 2 * words.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(x >> (8 * b)));
  for (auto it = words.rbegin(); it != words.rend(); ++it) {
    out.push_back(static_cast<std::uint8_t>(*it & 0xff));
    out.push_back(static_cast<std::uint8_t>(*it >> 8));
  }
  return out;
}

std::vector<int> decode(std::span<const std::uint8_t> bytes, std::span<const FrequencyTable* const> tables) {
  if (bytes.size() < 4) throw Error(ErrorCode::kTruncated, "rANS stream shorter than its state");
  std::uint32_t x = 0;
  for (int b = 0; b < 4; ++b) x |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
  std::size_t pos = 4;
  std::vector<int> out(tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& t = *tables[i];
    const std::uint32_t slot = x & (kTotal - 1);
    const int s = t.lookup(slot);
    out[i] = s;
    x = t.freq(s) * (x >> kPrecisionBits) + slot - t.cum(s);
    while (x < kLow) {
      if (pos + 2 > bytes.size()) {
        throw Error(ErrorCode::kTruncated, "rANS stream ended after " + std::to_string(i) + " symbols");
      }
      x = (x << 16) | bytes[pos] | (static_cast<std::uint32_t>(bytes[pos + 1]) << 8);
      pos += 2;
    }
  }
  if (x != kLow || pos != bytes.size()) {
    throw Error(ErrorCode::kFormat, "rANS stream does not end in the initial state");
  }
  return out;
}

}  // namespace idlat::rans
