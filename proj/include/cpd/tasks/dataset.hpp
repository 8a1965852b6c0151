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

#ifndef CPD_TASKS_DATASET_HPP_
#define CPD_TASKS_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpd/tasks/env.hpp"

namespace cpd {

// Affine map of each feature from [lo, hi] onto [-1, 1]. A feature of
// period p repeats the same statistics every p rows (used for action
// sequences, where all H steps share the per-component range).
struct Normalizer {
  VectorXf lo, hi;

  static Normalizer fit(const MatrixXf& data, int period);
  int period() const { return static_cast<int>(lo.size()); }
  MatrixXf normalize(const MatrixXf& x) const;
  MatrixXf denormalize(const MatrixXf& x) const;
  bool operator==(const Normalizer&) const = default;
};

// Normalized (observation, action sequence) training pairs, one per column.
struct Dataset {
  std::string task;
  int horizon = 16;
  int action_dim = 2;
  MatrixXf obs;      // C x n
  MatrixXf actions;  // (H*A) x n, time-major offsets a_h - position(s_0)
  Normalizer obs_norm, act_norm;
  std::vector<int> episode_windows;  // pairs contributed by each episode

  int size() const { return static_cast<int>(actions.cols()); }
  int obs_dim() const { return static_cast<int>(obs.rows()); }
  int sequence_dim() const { return static_cast<int>(actions.rows()); }
  // Standard deviation over every normalized action entry.
  double action_std() const;
};

struct ExpertEpisode {
  std::vector<VectorXf> states;   // s_0 .. s_T, one more than actions
  std::vector<VectorXf> actions;  // a_0 .. a_{T-1}, including hold steps
  // With execution noise: the clean expert plan (A x H) from each s_i, i < T.
  std::vector<MatrixXf> plans;
  bool success = false;
  int mode = 0;  // multimodal-reach side taken (+1 / -1), 0 otherwise
};

// Receding-horizon expert rollout. After the episode ends, H-1 hold
// actions (stay in place) are appended so the final windows are complete.
// A positive `action_noise` switches to replanning every step, recording the
// clean plan and executing its first action plus N(0, action_noise^2) per
// component.
ExpertEpisode run_expert(const Env& env, Rng& rng, double action_noise = 0.0);

// Without noise: windows of H consecutive actions paired with the stacked
// observation at the window start, (actions - H + 1) pairs per episode.
// With noise: each visited state s_i, i < T, paired with its clean plan.
Dataset generate_dataset(const Env& env, int n_episodes, std::uint64_t seed,
                         std::vector<ExpertEpisode>* episodes = nullptr,
                         double action_noise = 0.0);

inline constexpr char kDatasetMagic[9] = "CPDATA01";
inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Decodes a normalized flat sequence into an A x H matrix in env units.
// Sequences are stored as offsets from the controlled position (the first A
// entries of the current state, i.e. of the last frame of `raw_obs`).
MatrixXf decode_actions(const Dataset& d, const VectorXf& normalized,
                        const VectorXf& raw_obs);

}  // namespace cpd

#endif  // CPD_TASKS_DATASET_HPP_
