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

#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "idlat/error.hpp"
#include "idlat/network.hpp"
#include "idlat/nn/autograd.hpp"
#include "idlat/volume.hpp"

namespace idlat::testing {

// Runs `fn` and checks that it throws idlat::Error with `code`.
#define EXPECT_IDLAT_ERROR(stmt, expected_code)                                  \
  do {                                                                           \
    try {                                                                        \
      stmt;                                                                      \
      ADD_FAILURE() << "expected error " << ::idlat::to_string(expected_code);   \
    } catch (const ::idlat::Error& e) {                                          \
      EXPECT_EQ(e.code(), expected_code) << e.what();                            \
    }                                                                            \
  } while (0)

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

nn::Tensor random_tensor(const nn::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

/// Smooth scalar field of `dims`: a few Gaussian blobs plus optional noise,
/// values roughly in [0, 1].
Volume blob_volume(Dims dims, std::uint64_t seed, double noise = 0.0);

/// Model with a 12^3 padded block (content 8, pad 2), two stride-2 layers,
/// K = 4 and normalization range [-0.5, 1.5]. Small enough for fast tests.
Model small_model(std::uint64_t seed = 7);

/// Max relative error between the analytic gradient of `f` at `x` and
/// central finite differences with step h. Relative error per element is
/// |a - n| / max(1, |a|, |n|).
double gradient_check(const std::function<nn::Var(const nn::Var&)>& f, const nn::Tensor& x,
                      double h = 1e-6);

}  // namespace idlat::testing
