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

#include "cpd/tasks/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cpd {
namespace {

using Vec2 = Eigen::Vector2f;

// Moves `from` toward `to` by at most `speed`; lands exactly on `to` when
// it is within reach.
Vec2 move_toward(const Vec2& from, const Vec2& to, double speed) {
  const Vec2 delta = to - from;
  const float dist = delta.norm();
  if (dist <= speed) return to;
  return from + delta * static_cast<float>(speed / dist);
}

void require_finite_state(const VectorXf& s, const char* where) {
  if (!s.allFinite()) throw NumericalError(std::string(where) + ": non-finite state");
}

void require_action(const VectorXf& a, int dim, const char* where) {
  if (a.size() != dim)
    throw DimensionError(std::string(where) + ": action has " +
                         std::to_string(a.size()) + " entries, expected " +
                         std::to_string(dim));
  if (!a.allFinite()) throw NumericalError(std::string(where) + ": non-finite action");
}

}  // namespace

std::string to_string(TaskId id) {
  return id == TaskId::multimodal_reach ? "multimodal-reach" : "push-point";
}

TaskId parse_task(const std::string& s) {
  if (s == "multimodal-reach") return TaskId::multimodal_reach;
  if (s == "push-point") return TaskId::push_point;
  throw ConfigError("unknown task '" + s +
                    "' (expected multimodal-reach or push-point)");
}

VectorXf stack_frames(const VectorXf& previous, const VectorXf& current) {
  VectorXf o(previous.size() + current.size());
  o << previous, current;
  return o;
}

std::unique_ptr<Env> make_env(TaskId id, Horizons h) {
  if (id == TaskId::multimodal_reach) return std::make_unique<MultimodalReach>(ReachParams{}, h);
  return std::make_unique<PushPoint>(PushParams{}, h);
}

namespace {

void apply_horizons(EnvSpec& spec, Horizons h) {
  if (h.horizon < 1 || h.exec_horizon < 1 || h.exec_horizon > h.horizon)
    throw ConfigError("need 1 <= execution horizon <= prediction horizon (got E=" +
                      std::to_string(h.exec_horizon) + ", H=" +
                      std::to_string(h.horizon) + ")");
  spec.horizon = h.horizon;
  spec.exec_horizon = h.exec_horizon;
}

}  // namespace

// ---------------------------------------------------------------------------

MultimodalReach::MultimodalReach(ReachParams p, Horizons h) : p_(p) {
  apply_horizons(spec_, h);
  spec_.task = TaskId::multimodal_reach;
  spec_.state_dim = 2;
  spec_.action_dim = 2;
  spec_.episode_cap = 80;
  spec_.goal_tolerance = 0.05;
}

VectorXf MultimodalReach::reset(Rng& rng) const {
  VectorXf s(2);
  s << 0.0f,
      static_cast<float>(p_.start_y + p_.start_jitter * (2.0 * rng.uniform() - 1.0));
  return s;
}

VectorXf MultimodalReach::step(const VectorXf& state, const VectorXf& action) const {
  require_action(action, 2, "multimodal-reach");
  VectorXf next = move_toward(Vec2(state(0), state(1)), Vec2(action(0), action(1)),
                              p_.max_speed);
  require_finite_state(next, "multimodal-reach");
  return next;
}

StepStatus MultimodalReach::status(const VectorXf& s) const {
  if (Vec2(s(0), s(1)).norm() < p_.obstacle_radius) return StepStatus::failure;
  if (Vec2(s(0), s(1) - p_.goal_y).norm() < spec_.goal_tolerance)
    return StepStatus::success;
  return StepStatus::running;
}

MatrixXf MultimodalReach::expert_plan(const VectorXf& state, Rng& rng) const {
  float side = state(0) > 0 ? 1.0f : -1.0f;
  if (state(0) == 0.0f) side = rng.bernoulli(0.5) ? 1.0f : -1.0f;
  const Vec2 waypoint(side * static_cast<float>(p_.waypoint_x), 0.0f);
  const Vec2 goal(0.0f, static_cast<float>(p_.goal_y));
  MatrixXf plan(2, spec_.horizon);
  Vec2 pos(state(0), state(1));
  for (int h = 0; h < spec_.horizon; ++h) {
    const Vec2 target = pos.y() < 0.0f ? waypoint : goal;
    pos = move_toward(pos, target, p_.max_speed);
    plan.col(h) = pos;
  }
  return plan;
}

// ---------------------------------------------------------------------------

PushPoint::PushPoint(PushParams p, Horizons h) : p_(p) {
  apply_horizons(spec_, h);
  spec_.task = TaskId::push_point;
  spec_.state_dim = 4;
  spec_.action_dim = 2;
  spec_.episode_cap = 200;
  spec_.goal_tolerance = 0.05 * (2.0 * p_.arena);  // 5% of the arena diameter
}

// The block starts 0.3 to 0.6 from the goal; the pusher starts on the far
// side of it, within 60 degrees of the goal line.
VectorXf PushPoint::reset(Rng& rng) const {
  const Vec2 goal(p_.goal_x, p_.goal_y);
  const float pi = std::numbers::pi_v<float>;
  const float a = static_cast<float>(rng.uniform()) * 2.0f * pi;
  const float r = 0.3f + 0.3f * static_cast<float>(rng.uniform());
  const Vec2 block = goal + r * Vec2(std::cos(a), std::sin(a));
  const float b = a + (static_cast<float>(rng.uniform()) * 2.0f - 1.0f) * pi / 3.0f;
  const float q = 0.3f + 0.2f * static_cast<float>(rng.uniform());
  const float lim = static_cast<float>(p_.arena - p_.pusher_radius);
  const Vec2 pusher =
      (block + q * Vec2(std::cos(b), std::sin(b))).cwiseMax(-lim).cwiseMin(lim);
  VectorXf s(4);
  s << pusher, block;
  return s;
}

VectorXf PushPoint::step(const VectorXf& state, const VectorXf& action) const {
  require_action(action, 2, "push-point");
  const float contact = static_cast<float>(p_.pusher_radius + p_.block_radius);
  const float lim_p = static_cast<float>(p_.arena - p_.pusher_radius);
  const float lim_b = static_cast<float>(p_.arena - p_.block_radius);
  const Vec2 old_p(state(0), state(1));
  Vec2 p = move_toward(old_p, Vec2(action(0), action(1)), p_.max_speed);
  p = p.cwiseMax(-lim_p).cwiseMin(lim_p);
  Vec2 b(state(2), state(3));
  const Vec2 gap = b - p;
  const float dist = gap.norm();
  if (dist < contact) {
    Vec2 n = dist > 1e-6f ? Vec2(gap / dist) : Vec2(p - old_p);
    if (n.norm() < 1e-9f) n = Vec2(1, 0);
    n.normalize();
    b = p + n * contact;
    const Vec2 clamped = b.cwiseMax(-lim_b).cwiseMin(lim_b);
    if (clamped != b) {
      // Block pinned at the wall: the pusher cannot penetrate it.
      b = clamped;
      Vec2 back = p - b;
      if (back.norm() < 1e-6f) back = -n;
      p = b + back.normalized() * contact;
    }
  }
  VectorXf next(4);
  next << p, b;
  require_finite_state(next, "push-point");
  return next;
}

StepStatus PushPoint::status(const VectorXf& s) const {
  if (Vec2(s(2) - p_.goal_x, s(3) - p_.goal_y).norm() < spec_.goal_tolerance)
    return StepStatus::success;
  return StepStatus::running;
}

// Proportional expert: head for the standoff point behind the block on the
// goal line and blend into pushing through the block as it gets there.
Eigen::Vector2f PushPoint::expert_target(const VectorXf& s) const {
  const Vec2 p(s(0), s(1)), b(s(2), s(3));
  const Vec2 goal(p_.goal_x, p_.goal_y);
  const float contact = static_cast<float>(p_.pusher_radius + p_.block_radius);
  if (status(s) == StepStatus::success) return p;
  const Vec2 d = (goal - b).normalized();
  const Vec2 standoff = b - d * (contact + 0.02f);
  const float w = std::clamp(1.0f - (p - standoff).norm() / 0.08f, 0.0f, 1.0f);
  return standoff + d * (0.1f * w);
}

MatrixXf PushPoint::expert_plan(const VectorXf& state, Rng&) const {
  MatrixXf plan(2, spec_.horizon);
  VectorXf s = state;
  for (int h = 0; h < spec_.horizon; ++h) {
    const Vec2 target = expert_target(s);
    s = step(s, target);
    plan.col(h) = s.head<2>();
  }
  return plan;
}

}  // namespace cpd
