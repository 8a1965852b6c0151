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

#ifndef CPD_SAMPLER_SAMPLER_HPP_
#define CPD_SAMPLER_SAMPLER_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "cpd/diffusion/solver.hpp"
#include "cpd/diffusion/teacher.hpp"
#include "cpd/numerics/rng.hpp"

namespace cpd {

enum class ChainMode { discretized, continuous };

inline std::string to_string(ChainMode m) {
  return m == ChainMode::discretized ? "discretized" : "continuous";
}

inline ChainMode parse_chain_mode(const std::string& s) {
  if (s == "discretized") return ChainMode::discretized;
  if (s == "continuous") return ChainMode::continuous;
  throw ConfigError("unknown chaining mode '" + s +
                    "' (expected discretized or continuous)");
}

struct SamplerConfig {
  double sigma_init = 1.0;  // start from N(0, sigma_init^2 I) at time T
  int steps = 1;            // k network evaluations
  ChainMode mode = ChainMode::discretized;
  std::uint64_t seed = 0;
};

inline void validate(const SamplerConfig& c) {
  if (c.steps < 1) throw ConfigError("sampler steps k must be >= 1");
  if (!(c.sigma_init > 0.0)) throw ConfigError("sampler sigma_init must be > 0");
}

template <typename Scalar>
struct InferenceReport {
  MatrixX<Scalar> actions;  // D x batch, normalized action space
  int nfe = 0;              // network evaluations per generated sequence
  double net_ms = 0;        // time inside network evaluations
  double total_ms = 0;      // whole inference call
};

// Mesh indices floor(j * n_steps / k) for j = k-1 .. 1, where n_steps is
// the index of T (mesh size - 1).
inline std::vector<int> discretized_chain_indices(int n_steps, int k) {
  if (k < 1) throw ConfigError("chain_times: k must be >= 1");
  if (k > n_steps)
    throw ConfigError("chain_times: k=" + std::to_string(k) +
                      " exceeds the number of mesh steps " +
                      std::to_string(n_steps));
  std::vector<int> idx;
  for (int j = k - 1; j >= 1; --j) idx.push_back((j * n_steps) / k);
  return idx;
}

// k-1 descending chaining indices on the schedule's mesh. Continuous mode
// subdivides [t_min, T] evenly and snaps each value to the nearest mesh time.
template <typename Scalar>
std::vector<int> chain_indices(const NoiseSchedule<Scalar>& schedule, int k,
                               ChainMode mode) {
  const int n_steps = schedule.size() - 1;
  if (mode == ChainMode::discretized) return discretized_chain_indices(n_steps, k);
  if (k < 1) throw ConfigError("chain_times: k must be >= 1");
  if (k > n_steps)
    throw ConfigError("chain_times: k exceeds the number of mesh steps");
  const double lo = static_cast<double>(schedule.t_min());
  const double hi = static_cast<double>(schedule.t_max());
  std::vector<int> idx;
  for (int j = k - 1; j >= 1; --j) {
    const double tau = lo + (static_cast<double>(j) / k) * (hi - lo);
    idx.push_back(schedule.nearest_index(tau));
  }
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (!(idx[i] < idx[i - 1]))
      throw ConfigError("chain_times: continuous subdivision collapses onto "
                        "the same mesh point; lower k");
  return idx;
}

template <typename Scalar>
std::vector<Scalar> chain_times(const NoiseSchedule<Scalar>& schedule, int k,
                                ChainMode mode) {
  std::vector<Scalar> times;
  for (int i : chain_indices(schedule, k, mode)) times.push_back(schedule.time(i));
  return times;
}

// Wraps a jump model (anything with jump(x, t, s, obs) and schedule()) and
// counts its evaluations. One jump call is one network forward pass.
template <typename Scalar, typename Model>
class CountingModel {
 public:
  using Matrix = MatrixX<Scalar>;
  using Row = RowVectorX<Scalar>;

  explicit CountingModel(const Model& model) : model_(model) {}

  Matrix jump(const Matrix& x, const Row& t, const Row& s,
              const Matrix& obs) const {
    const auto t0 = std::chrono::steady_clock::now();
    Matrix out = model_.jump(x, t, s, obs);
    net_ms_ += std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
    ++count_;
    return out;
  }

  decltype(auto) schedule() const { return model_.schedule(); }
  int action_dim() const { return model_.action_dim(); }
  long count() const { return count_; }
  double net_ms() const { return net_ms_; }

 private:
  const Model& model_;
  mutable long count_ = 0;
  mutable double net_ms_ = 0;
};

// Same, around a bound denoiser callable.
template <typename Scalar, typename Denoiser>
class CountingDenoiser {
 public:
  using Matrix = MatrixX<Scalar>;
  using Row = RowVectorX<Scalar>;

  explicit CountingDenoiser(const Denoiser& d) : d_(d) {}

  Matrix operator()(const Matrix& x, const Row& t) const {
    const auto t0 = std::chrono::steady_clock::now();
    Matrix out = d_(x, t);
    net_ms_ += std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
    ++count_;
    return out;
  }

  long count() const { return count_; }
  double net_ms() const { return net_ms_; }

 private:
  const Denoiser& d_;
  mutable long count_ = 0;
  mutable double net_ms_ = 0;
};

namespace detail {

template <typename Scalar, typename Model>
InferenceReport<Scalar> chained(const Model& model, const MatrixX<Scalar>& obs,
                                const SamplerConfig& cfg, Rng& rng) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  CountingModel<Scalar, Model> counted(model);
  const auto& sched = model.schedule();
  const Eigen::Index batch = obs.cols();
  const std::vector<Scalar> taus = chain_times(sched, cfg.steps, cfg.mode);
  const RowVectorX<Scalar> zero = RowVectorX<Scalar>::Zero(batch);

  MatrixX<Scalar> x =
      rng.normal_matrix<Scalar>(model.action_dim(), batch, cfg.sigma_init);
  x = counted.jump(x, RowVectorX<Scalar>::Constant(batch, sched.t_max()), zero,
                   obs);
  for (const Scalar tau : taus) {
    x += tau * rng.normal_matrix<Scalar>(x.rows(), batch);
    x = counted.jump(x, RowVectorX<Scalar>::Constant(batch, tau), zero, obs);
  }
  InferenceReport<Scalar> r;
  r.actions = std::move(x);
  r.nfe = static_cast<int>(counted.count());
  r.net_ms = counted.net_ms();
  r.total_ms = std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start)
                   .count();
  return r;
}

}  // namespace detail

// x = g(z, T, 0; o) with z ~ N(0, sigma_init^2 I). One evaluation.
template <typename Scalar, typename Model>
InferenceReport<Scalar> single_step(const Model& model, const MatrixX<Scalar>& obs,
                                    SamplerConfig cfg, Rng& rng) {
  cfg.steps = 1;
  return detail::chained<Scalar>(model, obs, cfg, rng);
}

// First a full jump from T, then for each chaining time tau:
// x <- x + tau * eps (fresh eps), x <- g(x, tau, 0; o). k evaluations.
template <typename Scalar, typename Model>
InferenceReport<Scalar> multi_step(const Model& model, const MatrixX<Scalar>& obs,
                                   const SamplerConfig& cfg, Rng& rng) {
  return detail::chained<Scalar>(model, obs, cfg, rng);
}

// Teacher sampling: x_T ~ N(0, sigma_init^2 I), Heun over the given
// descending mesh indices.
template <typename Scalar>
InferenceReport<Scalar> teacher_sample(const Teacher<Scalar>& teacher,
                                       const MatrixX<Scalar>& obs,
                                       double sigma_init,
                                       const std::vector<int>& indices, Rng& rng,
                                       SolveOptions opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const auto bound = teacher.denoiser(obs);
  CountingDenoiser<Scalar, decltype(bound)> counted(bound);
  MatrixX<Scalar> x =
      rng.normal_matrix<Scalar>(teacher.spec().action_dim, obs.cols(), sigma_init);
  auto res = solve<Scalar>(counted, teacher.schedule(), std::move(x), indices, opts);
  InferenceReport<Scalar> r;
  r.actions = std::move(res.x);
  r.nfe = static_cast<int>(counted.count());
  if (r.nfe != res.nfe)
    throw Error("teacher_sample: evaluation counter disagrees with solver");
  r.net_ms = counted.net_ms();
  r.total_ms = std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start)
                   .count();
  return r;
}

template <typename Scalar>
InferenceReport<Scalar> teacher_sample(const Teacher<Scalar>& teacher,
                                       const MatrixX<Scalar>& obs,
                                       double sigma_init, Rng& rng) {
  return teacher_sample<Scalar>(teacher, obs, sigma_init,
                                full_mesh_indices(teacher.schedule().size()), rng);
}

}  // namespace cpd

#endif  // CPD_SAMPLER_SAMPLER_HPP_
