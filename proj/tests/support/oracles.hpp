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

#ifndef CPD_TESTS_SUPPORT_ORACLES_HPP_
#define CPD_TESTS_SUPPORT_ORACLES_HPP_

#include <array>
#include <cmath>
#include <string>

#include "cpd/numerics/param_set.hpp"

// Values computed once by an independent float64 reimplementation and
// frozen here.
namespace cpd::oracle {

// t_min = 0.002, T = 80, rho = 7, N = 10.
inline constexpr std::array<double, 10> kMeshRho7N10 = {
    0.002,
    0.020435334553438718,
    0.1166385635251784,
    0.4699790579977467,
    1.501741979068008,
    4.066123602953759,
    9.72320135526012,
    21.10867673619376,
    42.41518931851267,
    80.0};

inline constexpr double kHuberC160 = 0.0068305197459637;
inline constexpr double kStderrHalf200 = 0.035355339059327376;

// Adam (lr 1e-3, default betas) from p = (1, -0.5) with g = (0.5, -2) twice.
inline constexpr std::array<double, 2> kAdamStep1 = {0.99900000002, -0.499000000005};
inline constexpr std::array<double, 2> kAdamStep2 = {0.99800000004, -0.49800000001};
inline constexpr double kAdamScalarFirstDelta = -0.0009999999800000003;

// CondMlp: input 3, output 2, hidden {4, 3}, branch "main" (2 -> 3), filled
// by fill_sine; x = [[.1, -.4], [.7, .2], [-.3, .9]], cond = [[.5, -1], [.25, .8]].
inline constexpr std::array<double, 4> kMlpOutRowMajor = {
    -0.0822483966978208, -0.1488540722363175, 0.04426816888902124,
    0.07775868954969503};

// Teacher: action_dim 2, obs_dim 1, hidden {3}, time_embed 2, cond_embed 2,
// max_frequency 16, observation input on, sigma_data 0.5, filled by
// fill_sine; x0 = (.3, -.2), eps = (.5, 1), t = .7, o = (.4).
inline constexpr std::array<double, 2> kDenoise = {-0.08176052151299995,
                                                   0.49816195871121605};
inline constexpr double kDsmNone = 0.79495725539095;
// Relative endpoint error: 40 Heun steps, sigma_data 0.5, default 41-point warp.
inline constexpr double kHeunGaussian40 = 0.0092857258381554;

inline constexpr double kDsmEdm = 1.9549642210314326;

// Entry k of the concatenation of all tensors (lexicographic by name,
// row-major within a tensor) is 0.5 sin(1.3 k + 0.2).
template <typename Scalar>
void fill_sine(ParamSet<Scalar>& p) {
  long k = 0;
  for (auto& [name, t] : p)
    for (Eigen::Index i = 0; i < t.value.rows(); ++i)
      for (Eigen::Index j = 0; j < t.value.cols(); ++j)
        t.value(i, j) = static_cast<Scalar>(0.5 * std::sin(1.3 * static_cast<double>(k++) + 0.2));
}

}  // namespace cpd::oracle

#endif  // CPD_TESTS_SUPPORT_ORACLES_HPP_
