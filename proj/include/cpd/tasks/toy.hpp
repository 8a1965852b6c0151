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

#ifndef CPD_TASKS_TOY_HPP_
#define CPD_TASKS_TOY_HPP_

#include <vector>

#include "cpd/numerics/rng.hpp"

namespace cpd {

// Equal-weight two-component Gaussian mixture on the real line.
struct BimodalSpec {
  double center = 0.6;  // modes at +-center
  double spread = 0.1;  // per-mode standard deviation
};

// 1 x n samples.
MatrixXf sample_bimodal(const BimodalSpec& spec, int n, Rng& rng);

// 1-Wasserstein distance between two empirical distributions on the line,
// computed exactly as the integral of |F_a - F_b|.
double wasserstein1(std::vector<double> a, std::vector<double> b);

template <typename Derived>
std::vector<double> to_samples(const Eigen::DenseBase<Derived>& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      v.push_back(static_cast<double>(m(i, j)));
  return v;
}

}  // namespace cpd

#endif  // CPD_TASKS_TOY_HPP_
