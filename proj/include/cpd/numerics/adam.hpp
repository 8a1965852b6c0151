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

#ifndef CPD_NUMERICS_ADAM_HPP_
#define CPD_NUMERICS_ADAM_HPP_

#include <cmath>
#include <cstdint>

#include "cpd/numerics/param_set.hpp"

namespace cpd {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  ParamSet<Scalar> m;
  ParamSet<Scalar> v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(const ParamSet<Scalar>& params, AdamConfig cfg)
      : config(cfg), m(params.zeros_like()), v(params.zeros_like()) {}
};

// Bias-corrected Adam:
//   m <- b1 m + (1 - b1) g,   v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^k)) / (sqrt(v / (1 - b2^k)) + eps)
template <typename Scalar>
void adam_step(ParamSet<Scalar>& params, const ParamSet<Scalar>& grads,
               AdamState<Scalar>& state) {
  params.require_same_layout(grads, "adam_step grads");
  params.require_same_layout(state.m, "adam_step state");
  const auto& c = state.config;
  state.step += 1;
  const double k = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(c.beta1);
  const Scalar b2 = static_cast<Scalar>(c.beta2);
  const Scalar corr1 = static_cast<Scalar>(1.0 - std::pow(c.beta1, k));
  const Scalar corr2 = static_cast<Scalar>(1.0 - std::pow(c.beta2, k));
  const Scalar lr = static_cast<Scalar>(c.learning_rate);
  const Scalar eps = static_cast<Scalar>(c.epsilon);
  for (auto& [name, tensor] : params) {
    const auto& g = grads[name].array();
    auto m = state.m[name].array();
    auto v = state.v[name].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    tensor.value.array() -= lr * (m / corr1) / ((v / corr2).sqrt() + eps);
  }
}

}  // namespace cpd

#endif  // CPD_NUMERICS_ADAM_HPP_
