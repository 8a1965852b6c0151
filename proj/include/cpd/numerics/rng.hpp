// Copyright 2026 The cp-distill Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CPD_NUMERICS_RNG_HPP_
#define CPD_NUMERICS_RNG_HPP_

#include <cstdint>
#include <random>

#include "cpd/numerics/types.hpp"

namespace cpd {

// Explicit random stream. Every stochastic operation takes one of these by
// reference; there is no global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix(seed)) {}

  // Independent child stream, a pure function of (parent seed, stream id).
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed) ^ mix(stream + 0x632be59bd9b4e019ULL));
  }

  double uniform() { return uniform_(engine_); }

  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() { return normal_(engine_); }

  template <typename Scalar>
  MatrixX<Scalar> normal_matrix(Eigen::Index rows, Eigen::Index cols,
                                double stddev = 1.0) {
    MatrixX<Scalar> m(rows, cols);
    // Column-major fill order, one draw per entry.
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i)
        m(i, j) = static_cast<Scalar>(stddev * normal());
    return m;
  }

  template <typename Scalar>
  MatrixX<Scalar> uniform_matrix(Eigen::Index rows, Eigen::Index cols,
                                 double lo, double hi) {
    MatrixX<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i)
        m(i, j) = static_cast<Scalar>(lo + (hi - lo) * uniform());
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cpd

#endif  // CPD_NUMERICS_RNG_HPP_
