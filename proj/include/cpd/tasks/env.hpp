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

#ifndef CPD_TASKS_ENV_HPP_
#define CPD_TASKS_ENV_HPP_

#include <memory>
#include <string>

#include "cpd/numerics/rng.hpp"
#include "cpd/numerics/types.hpp"

namespace cpd {

enum class TaskId { multimodal_reach, push_point };

std::string to_string(TaskId id);
TaskId parse_task(const std::string& s);

struct EnvSpec {
  TaskId task = TaskId::multimodal_reach;
  int state_dim = 2;
  int action_dim = 2;      // A, per time step
  int episode_cap = 80;    // environment steps
  double goal_tolerance = 0.05;
  int horizon = 16;        // H, predicted actions per decision
  int exec_horizon = 8;    // E, executed before replanning
  int frames = 2;          // stacked states per observation

  int obs_dim() const { return frames * state_dim; }
  int sequence_dim() const { return horizon * action_dim; }  // D
};

// Prediction and execution horizons shared by both tasks.
struct Horizons {
  int horizon = 16;
  int exec_horizon = 8;
};

enum class StepStatus { running, success, failure };

// Deterministic point-mass environments. Actions are absolute target
// positions for the controlled point; each step moves toward the target by
// at most `max_speed`. All randomness enters through reset().
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual VectorXf reset(Rng& rng) const = 0;
  virtual VectorXf step(const VectorXf& state, const VectorXf& action) const = 0;
  virtual StepStatus status(const VectorXf& state) const = 0;
  // Expert plan from `state`: A x H, one action per column.
  virtual MatrixXf expert_plan(const VectorXf& state, Rng& rng) const = 0;
};

// Point mass from (0, -0.8) to (0, 0.8) around a disc obstacle at the
// origin. Touching the obstacle ends the episode as a failure. The expert
// passes through one of two mirror waypoints (+-0.5, 0); from x = 0 it picks
// a side with probability 1/2, otherwise it keeps the side it is on.
struct ReachParams {
  double start_y = -0.8;
  double start_jitter = 0.05;  // uniform on start_y only, x stays 0
  double goal_y = 0.8;
  double obstacle_radius = 0.3;
  double waypoint_x = 0.5;
  double max_speed = 0.05;
};

class MultimodalReach final : public Env {
 public:
  explicit MultimodalReach(ReachParams p = {}, Horizons h = {});
  const EnvSpec& spec() const override { return spec_; }
  VectorXf reset(Rng& rng) const override;
  VectorXf step(const VectorXf& state, const VectorXf& action) const override;
  StepStatus status(const VectorXf& state) const override;
  MatrixXf expert_plan(const VectorXf& state, Rng& rng) const override;
  const ReachParams& params() const { return p_; }

 private:
  ReachParams p_;
  EnvSpec spec_;
};

// Circular pusher and circular block in the [-1, 1]^2 arena. Quasi-static
// contact: after the pusher moves, an overlapping block is translated out
// along the contact normal. Success when the block centre is within 5% of
// the arena diameter of the fixed goal.
struct PushParams {
  double pusher_radius = 0.05;
  double block_radius = 0.1;
  double max_speed = 0.05;
  double goal_x = 0.0, goal_y = 0.0;
  double arena = 1.0;  // half-width
};

class PushPoint final : public Env {
 public:
  explicit PushPoint(PushParams p = {}, Horizons h = {});
  const EnvSpec& spec() const override { return spec_; }
  VectorXf reset(Rng& rng) const override;
  VectorXf step(const VectorXf& state, const VectorXf& action) const override;
  StepStatus status(const VectorXf& state) const override;
  MatrixXf expert_plan(const VectorXf& state, Rng& rng) const override;
  const PushParams& params() const { return p_; }

 private:
  Eigen::Vector2f expert_target(const VectorXf& state) const;
  PushParams p_;
  EnvSpec spec_;
};

std::unique_ptr<Env> make_env(TaskId id, Horizons h = {});

// Observation from the two most recent states, oldest first.
VectorXf stack_frames(const VectorXf& previous, const VectorXf& current);

}  // namespace cpd

#endif  // CPD_TASKS_ENV_HPP_
