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

#ifndef CPD_DIFFUSION_TRAIN_HPP_
#define CPD_DIFFUSION_TRAIN_HPP_

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "cpd/diffusion/losses.hpp"
#include "cpd/numerics/adam.hpp"

namespace cpd {

struct TrainConfig {
  int steps = 4000;
  int batch = 256;
  AdamConfig adam;
  // Cosine decay from the base rate down to base * final_lr_fraction.
  bool cosine_decay = true;
  double final_lr_fraction = 0.1;
  // Teacher denoising objective only.
  DsmWeighting dsm_weighting = DsmWeighting::edm;
};

struct TrainRecord {
  int step = 0;
  double loss = 0;       // total objective
  double loss_ctm = 0;   // consistency term (distillation only)
  double loss_dsm = 0;   // denoising term
  double grad_norm = 0;
  double wall_ms = 0;    // this step
};

inline double learning_rate_at(const TrainConfig& cfg, int step) {
  if (!cfg.cosine_decay || cfg.steps <= 1) return cfg.adam.learning_rate;
  const double progress = static_cast<double>(step) / (cfg.steps - 1);
  const double f = cfg.final_lr_fraction;
  return cfg.adam.learning_rate *
         (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

template <typename Scalar>
MatrixX<Scalar> gather_columns(const MatrixX<Scalar>& m,
                               const std::vector<int>& cols) {
  MatrixX<Scalar> out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(j) = m.col(cols[j]);
  return out;
}

inline std::vector<int> sample_rows(int n, int batch, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = rng.uniform_int(0, n - 1);
  return idx;
}

template <typename Scalar>
using TeacherStepHook =
    std::function<void(const TrainRecord&, const Teacher<Scalar>&)>;

// DSM training on (x0, o) columns. Single-threaded and deterministic in rng.
template <typename Scalar>
std::vector<TrainRecord> train_teacher(Teacher<Scalar>& teacher,
                                       const MatrixX<Scalar>& actions,
                                       const MatrixX<Scalar>& obs,
                                       const TrainConfig& cfg, Rng& rng,
                                       const TeacherStepHook<Scalar>& hook = {}) {
  if (actions.cols() != obs.cols() || actions.cols() == 0)
    throw DimensionError("train_teacher: actions and observations must be "
                         "non-empty and have matching columns");
  if (cfg.batch <= 0 || cfg.steps < 0)
    throw ConfigError("train_teacher: batch must be >= 1 and steps >= 0");
  AdamState<Scalar> adam(teacher.params(), cfg.adam);
  std::vector<TrainRecord> log;
  log.reserve(static_cast<std::size_t>(cfg.steps));
  const int n = static_cast<int>(actions.cols());
  for (int step = 0; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = sample_rows(n, cfg.batch, rng);
    const auto batch = make_pfode_batch<Scalar>(
        teacher.schedule(), gather_columns(actions, rows),
        gather_columns(obs, rows), rng);
    auto lg = dsm_loss_grad<Scalar>(teacher, teacher.params(), batch,
                                    Mode::train, &rng, cfg.dsm_weighting);
    adam.config.learning_rate = learning_rate_at(cfg, step);
    adam_step(teacher.params(), lg.grads, adam);
    TrainRecord rec;
    rec.step = step;
    rec.loss = rec.loss_dsm = static_cast<double>(lg.value);
    rec.grad_norm = std::sqrt(lg.grads.squared_norm());
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    log.push_back(rec);
    if (hook) hook(rec, teacher);
  }
  return log;
}

}  // namespace cpd

#endif  // CPD_DIFFUSION_TRAIN_HPP_
