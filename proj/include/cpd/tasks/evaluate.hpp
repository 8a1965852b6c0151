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

#ifndef CPD_TASKS_EVALUATE_HPP_
#define CPD_TASKS_EVALUATE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "cpd/distillation/student.hpp"
#include "cpd/sampler/sampler.hpp"
#include "cpd/tasks/dataset.hpp"

namespace cpd {

// One decision: A x H actions in env units plus the cost of producing them.
struct Decision {
  MatrixXf actions;
  int nfe = 0;
  double net_ms = 0;
  double total_ms = 0;
};

// Maps a raw stacked observation to an action plan. Must be reentrant: all
// randomness comes through the supplied stream.
using Policy = std::function<Decision(const VectorXf& obs, Rng& rng)>;

struct EpisodeResult {
  bool success = false;
  int steps = 0;
  int mode = 0;  // multimodal-reach side (+1 / -1); 0 elsewhere
  std::vector<Decision> decisions;  // actions dropped, costs kept
};

// Predict H, execute the first E, replan; stop on success, failure or the
// episode cap. Environment and policy noise both derive from `seed`.
EpisodeResult rollout(const Env& env, const Policy& policy, std::uint64_t seed);

struct EvalSummary {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0;
  double stderr_ = 0;
  double mean_nfe = 0;      // per decision
  int min_nfe = 0, max_nfe = 0;
  double mean_decision_ms = 0;
  double mean_net_ms = 0;
  double mode_positive = 0; // fraction of episodes on the +x side
  double mode_negative = 0;
  std::vector<EpisodeResult> results;  // seed order
};

// Binomial standard error sqrt(p (1 - p) / n).
double binomial_stderr(double p, int n);

// Rollouts for seeds base_seed + 0 .. n-1, fanned out over `threads`
// workers and merged in seed order, so the result is independent of the
// thread count.
EvalSummary evaluate(const Env& env, const Policy& policy, int n,
                     std::uint64_t base_seed = 0, int threads = 1);

// Thread cap from CP_THREADS (default 1).
int worker_threads();

Policy expert_policy(const Env& env);

// Student with the given sampler settings; each call draws fresh noise.
Policy student_policy(const Student<float>& student, const Dataset& data,
                      const SamplerConfig& cfg);

// Teacher Heun solve over `indices` (full mesh when empty) from
// N(0, sigma_init^2 I).
Policy teacher_policy(const Teacher<float>& teacher, const Dataset& data,
                      double sigma_init = 80.0, std::vector<int> indices = {});

}  // namespace cpd

#endif  // CPD_TASKS_EVALUATE_HPP_
