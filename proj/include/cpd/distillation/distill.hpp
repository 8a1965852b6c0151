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

#ifndef CPD_DISTILLATION_DISTILL_HPP_
#define CPD_DISTILLATION_DISTILL_HPP_

#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include "cpd/diffusion/train.hpp"
#include "cpd/distillation/ctm.hpp"

namespace cpd {

struct DistillRecord : TrainRecord {
  double dist_at_s = 0;
  long teacher_nfe = 0;
};

template <typename Scalar>
using DistillStepHook =
    std::function<void(const DistillRecord&, const Student<Scalar>&)>;

// Minibatch loop: sample rows -> sample triples -> build x_t / x_u ->
// combined loss -> gradient -> Adam. The stop-gradient target is a frozen
// copy of the tracked parameters, refreshed every `target_refresh` steps.
template <typename Scalar>
std::vector<DistillRecord> distill(Student<Scalar>& student,
                                   const Teacher<Scalar>* teacher,
                                   const MatrixX<Scalar>& actions,
                                   const MatrixX<Scalar>& obs,
                                   const DistillConfig& cfg,
                                   const TrainConfig& train, Rng& rng,
                                   const DistillStepHook<Scalar>& hook = {}) {
  validate(cfg, teacher != nullptr);
  if (actions.cols() != obs.cols() || actions.cols() == 0)
    throw DimensionError("distill: actions and observations must be non-empty "
                         "and have matching columns");
  if (train.batch <= 0 || train.steps < 0)
    throw ConfigError("distill: batch must be >= 1 and steps >= 0");
  if (teacher && teacher->schedule().params() != student.schedule().params())
    throw ConfigError("distill: teacher and student schedules differ");

  AdamState<Scalar> adam(student.params(), train.adam);
  ParamSet<Scalar> stop = student.params();
  std::vector<DistillRecord> log;
  log.reserve(static_cast<std::size_t>(train.steps));
  const int n = static_cast<int>(actions.cols());
  for (int step = 0; step < train.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    if (step % cfg.target_refresh == 0) stop = student.params();
    const auto rows = sample_rows(n, train.batch, rng);
    const auto batch = make_distill_batch<Scalar>(
        student.schedule(), teacher, gather_columns(actions, rows),
        gather_columns(obs, rows), cfg, rng);
    DistillLoss<Scalar> loss;
    try {
      loss = combined_loss<Scalar>(student, student.params(), stop, batch, cfg,
                                   rng);
    } catch (const NumericalError& e) {
      throw NumericalError("distill: step " + std::to_string(step) + ": " +
                           e.what());
    }
    if (!std::isfinite(static_cast<double>(loss.total)))
      throw NumericalError("distill: non-finite loss at step " +
                           std::to_string(step));
    adam.config.learning_rate = learning_rate_at(train, step);
    adam_step(student.params(), loss.grads, adam);
    DistillRecord rec;
    rec.step = step;
    rec.loss = static_cast<double>(loss.total);
    rec.loss_ctm = static_cast<double>(loss.ctm);
    rec.loss_dsm = static_cast<double>(loss.dsm);
    rec.dist_at_s = static_cast<double>(loss.dist_at_s);
    rec.teacher_nfe = batch.teacher_nfe;
    rec.grad_norm = std::sqrt(loss.grads.squared_norm());
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    log.push_back(rec);
    if (hook) hook(rec, student);
  }
  return log;
}

}  // namespace cpd

#endif  // CPD_DISTILLATION_DISTILL_HPP_
