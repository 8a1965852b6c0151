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

#ifndef CPD_DIFFUSION_LOSSES_HPP_
#define CPD_DIFFUSION_LOSSES_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "cpd/diffusion/teacher.hpp"

namespace cpd {

// c = 0.00054 sqrt(D).
inline double pseudo_huber_c(int dim) {
  return 0.00054 * std::sqrt(static_cast<double>(dim));
}

// d(a, b) = sqrt(|a - b|^2 + c^2) - c
template <typename Scalar, typename A, typename B>
Scalar pseudo_huber(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                    Scalar c) {
  if (a.size() != b.size()) throw DimensionError("pseudo_huber: size mismatch");
  return std::sqrt((a - b).squaredNorm() + c * c) - c;
}

template <typename Scalar, typename A, typename B>
Scalar pseudo_huber(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return pseudo_huber<Scalar>(
      a, b, static_cast<Scalar>(pseudo_huber_c(static_cast<int>(a.size()))));
}

template <typename Scalar>
struct BatchLoss {
  Scalar value = 0;        // mean over columns
  MatrixX<Scalar> grad_a;  // d value / d a
};

// Column-wise pseudo-Huber between a and b, averaged over the batch. The
// per-column distances are summed sequentially for a fixed reduction order.
template <typename Scalar>
BatchLoss<Scalar> pseudo_huber_batch(const MatrixX<Scalar>& a,
                                     const MatrixX<Scalar>& b, Scalar c) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("pseudo_huber_batch: " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
  BatchLoss<Scalar> out;
  out.grad_a.resize(a.rows(), a.cols());
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(a.cols());
  double acc = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const auto diff = (a.col(j) - b.col(j)).eval();
    const Scalar root = std::sqrt(diff.squaredNorm() + c * c);
    acc += static_cast<double>(root - c);
    out.grad_a.col(j) = diff * (inv_n / root);
  }
  out.value = static_cast<Scalar>(acc / static_cast<double>(a.cols()));
  return out;
}

template <typename Scalar>
BatchLoss<Scalar> pseudo_huber_batch(const MatrixX<Scalar>& a,
                                     const MatrixX<Scalar>& b) {
  return pseudo_huber_batch<Scalar>(
      a, b, static_cast<Scalar>(pseudo_huber_c(static_cast<int>(a.rows()))));
}

// Training batch on the forward-noising path: x_t = x0 + t eps.
template <typename Scalar>
struct PfodeBatch {
  MatrixX<Scalar> x_t;
  RowVectorX<Scalar> t;
  MatrixX<Scalar> obs;
  MatrixX<Scalar> x0;
  MatrixX<Scalar> eps;
  std::vector<int> t_index;
};

// Times drawn uniformly over mesh indices 1..N-1, noise standard normal.
template <typename Scalar>
PfodeBatch<Scalar> make_pfode_batch(const NoiseSchedule<Scalar>& schedule,
                                    MatrixX<Scalar> x0, MatrixX<Scalar> obs,
                                    Rng& rng) {
  PfodeBatch<Scalar> b;
  const Eigen::Index n = x0.cols();
  b.t_index.resize(static_cast<std::size_t>(n));
  for (auto& i : b.t_index) i = rng.uniform_int(1, schedule.size() - 1);
  b.t = schedule.times_at(b.t_index);
  b.eps = rng.normal_matrix<Scalar>(x0.rows(), n);
  b.x_t = noise_sample<Scalar>(x0, b.t, b.eps);
  b.x0 = std::move(x0);
  b.obs = std::move(obs);
  return b;
}

template <typename Scalar>
struct LossAndGrad {
  Scalar value = 0;
  ParamSet<Scalar> grads;
};

// How the denoising distance is scaled per sample.
//   none: d(D(x_t), x0), in data units.
//   edm:  d(D(x_t) / c_out, x0 / c_out), i.e. the distance between the raw
//         network output and its effective target. Without it, samples at
//         small t carry gradients scaled by c_out(t) ~ t and the denoiser
//         is barely trained where sampling ends.
enum class DsmWeighting { none, edm };

inline std::string to_string(DsmWeighting w) {
  return w == DsmWeighting::edm ? "edm" : "none";
}

inline DsmWeighting parse_dsm_weighting(const std::string& s) {
  if (s == "edm") return DsmWeighting::edm;
  if (s == "none") return DsmWeighting::none;
  throw ConfigError("unknown DSM weighting '" + s + "' (expected edm or none)");
}

// Per-column factor applied to both arguments of the distance.
template <typename Scalar>
RowVectorX<Scalar> dsm_scale(const Teacher<Scalar>& teacher, const RowVectorX<Scalar>& t,
                             DsmWeighting w) {
  RowVectorX<Scalar> k = RowVectorX<Scalar>::Ones(t.size());
  if (w == DsmWeighting::edm) {
    const Scalar sd = teacher.schedule().sigma_data();
    for (Eigen::Index j = 0; j < t.size(); ++j)
      k(j) = Scalar(1) / edm_precond(t(j), sd).out;
  }
  return k;
}

// Mean pseudo-Huber between x0 and D(x_t, t; o), scaled per `w`.
template <typename Scalar>
Scalar dsm_loss(const Teacher<Scalar>& teacher, const ParamSet<Scalar>& params,
                const PfodeBatch<Scalar>& batch, Mode mode = Mode::eval,
                Rng* rng = nullptr, DsmWeighting w = DsmWeighting::edm) {
  const MatrixX<Scalar> d =
      teacher.denoise(params, batch.x_t, batch.t, batch.obs, mode, rng);
  const RowVectorX<Scalar> k = dsm_scale(teacher, batch.t, w);
  const Scalar v =
      pseudo_huber_batch<Scalar>(d * k.asDiagonal(), batch.x0 * k.asDiagonal()).value;
  if (!std::isfinite(static_cast<double>(v)))
    throw NumericalError("dsm_loss: non-finite loss");
  return v;
}

template <typename Scalar>
LossAndGrad<Scalar> dsm_loss_grad(const Teacher<Scalar>& teacher,
                                  const ParamSet<Scalar>& params,
                                  const PfodeBatch<Scalar>& batch,
                                  Mode mode = Mode::train, Rng* rng = nullptr,
                                  DsmWeighting w = DsmWeighting::edm) {
  typename Teacher<Scalar>::Cache cache;
  const MatrixX<Scalar> d =
      teacher.denoise(params, batch.x_t, batch.t, batch.obs, mode, rng, &cache);
  const RowVectorX<Scalar> k = dsm_scale(teacher, batch.t, w);
  const auto loss =
      pseudo_huber_batch<Scalar>(d * k.asDiagonal(), batch.x0 * k.asDiagonal());
  if (!std::isfinite(static_cast<double>(loss.value)))
    throw NumericalError("dsm_loss: non-finite loss");
  LossAndGrad<Scalar> out;
  out.value = loss.value;
  out.grads = params.zeros_like();
  teacher.backward(params, cache, loss.grad_a * k.asDiagonal(), &out.grads);
  require_finite(out.grads, "dsm_loss");
  return out;
}

}  // namespace cpd

#endif  // CPD_DIFFUSION_LOSSES_HPP_
