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

#include "cpd/tasks/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace cpd {

EpisodeResult rollout(const Env& env, const Policy& policy, std::uint64_t seed) {
  const EnvSpec& spec = env.spec();
  if (spec.exec_horizon < 1 || spec.exec_horizon > spec.horizon)
    throw ConfigError("rollout: execution horizon must be in [1, H]");
  Rng env_rng = Rng::derive(seed, 0);
  Rng policy_rng = Rng::derive(seed, 1);
  EpisodeResult res;
  VectorXf s = env.reset(env_rng);
  VectorXf prev = s;
  StepStatus st = env.status(s);
  float max_abs_x = 0;
  while (st == StepStatus::running && res.steps < spec.episode_cap) {
    Decision d = policy(stack_frames(prev, s), policy_rng);
    if (d.actions.rows() != spec.action_dim || d.actions.cols() < spec.exec_horizon)
      throw DimensionError("rollout: policy returned " +
                           shape_str(d.actions.rows(), d.actions.cols()) +
                           " actions, expected " +
                           shape_str(spec.action_dim, spec.horizon));
    for (int e = 0; e < spec.exec_horizon && st == StepStatus::running &&
                    res.steps < spec.episode_cap;
         ++e) {
      prev = s;
      s = env.step(s, d.actions.col(e));
      ++res.steps;
      st = env.status(s);
      if (std::abs(s(0)) > max_abs_x) {
        max_abs_x = std::abs(s(0));
        res.mode = s(0) > 0 ? 1 : -1;
      }
    }
    d.actions.resize(0, 0);
    res.decisions.push_back(std::move(d));
  }
  res.success = st == StepStatus::success;
  if (spec.task != TaskId::multimodal_reach) res.mode = 0;
  return res;
}

double binomial_stderr(double p, int n) {
  if (n < 1) throw ConfigError("binomial_stderr: n must be >= 1");
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / n);
}

int worker_threads() {
  if (const char* v = std::getenv("CP_THREADS")) {
    const int n = std::atoi(v);
    if (n >= 1) return n;
  }
  return 1;
}

EvalSummary evaluate(const Env& env, const Policy& policy, int n,
                     std::uint64_t base_seed, int threads) {
  if (n < 2) throw ConfigError("evaluate: need at least 2 episodes");
  EvalSummary sum;
  sum.episodes = n;
  sum.results.resize(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        sum.results[i] = rollout(env, policy, base_seed + static_cast<std::uint64_t>(i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  threads = std::clamp(threads, 1, n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  long decisions = 0, nfe_total = 0;
  double ms = 0, net = 0;
  sum.min_nfe = std::numeric_limits<int>::max();
  for (const auto& r : sum.results) {
    sum.successes += r.success ? 1 : 0;
    if (r.mode > 0) sum.mode_positive += 1;
    if (r.mode < 0) sum.mode_negative += 1;
    for (const auto& d : r.decisions) {
      ++decisions;
      nfe_total += d.nfe;
      ms += d.total_ms;
      net += d.net_ms;
      sum.min_nfe = std::min(sum.min_nfe, d.nfe);
      sum.max_nfe = std::max(sum.max_nfe, d.nfe);
    }
  }
  if (decisions == 0) sum.min_nfe = 0;
  sum.success_rate = static_cast<double>(sum.successes) / n;
  sum.stderr_ = binomial_stderr(sum.success_rate, n);
  sum.mode_positive /= n;
  sum.mode_negative /= n;
  if (decisions > 0) {
    sum.mean_nfe = static_cast<double>(nfe_total) / decisions;
    sum.mean_decision_ms = ms / decisions;
    sum.mean_net_ms = net / decisions;
  }
  return sum;
}

Policy expert_policy(const Env& env) {
  return [&env](const VectorXf& obs, Rng& rng) {
    const int k = env.spec().state_dim;
    Decision d;
    d.actions = env.expert_plan(obs.tail(k), rng);
    return d;
  };
}

namespace {

Decision to_decision(const Dataset& data, const VectorXf& obs,
                     InferenceReport<float>&& r) {
  Decision d;
  d.actions = decode_actions(data, r.actions.col(0), obs);
  d.nfe = r.nfe;
  d.net_ms = r.net_ms;
  d.total_ms = r.total_ms;
  return d;
}

}  // namespace

Policy student_policy(const Student<float>& student, const Dataset& data,
                      const SamplerConfig& cfg) {
  validate(cfg);
  return [&student, &data, cfg](const VectorXf& obs, Rng& rng) {
    const MatrixXf o = data.obs_norm.normalize(obs);
    return to_decision(data, obs, multi_step<float>(student, o, cfg, rng));
  };
}

Policy teacher_policy(const Teacher<float>& teacher, const Dataset& data,
                      double sigma_init, std::vector<int> indices) {
  if (indices.empty()) indices = full_mesh_indices(teacher.schedule().size());
  return [&teacher, &data, sigma_init, indices](const VectorXf& obs, Rng& rng) {
    const MatrixXf o = data.obs_norm.normalize(obs);
    return to_decision(data, obs, teacher_sample<float>(teacher, o, sigma_init, indices, rng));
  };
}

}  // namespace cpd
