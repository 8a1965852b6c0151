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

#include "cpd/tasks/dataset.hpp"

#include <cmath>

#include "cpd/numerics/checkpoint.hpp"

namespace cpd {

Normalizer Normalizer::fit(const MatrixXf& data, int period) {
  if (period < 1 || data.rows() % period != 0 || data.cols() == 0)
    throw DimensionError("Normalizer::fit: data is " +
                         shape_str(data.rows(), data.cols()) +
                         ", not a non-empty multiple of period " +
                         std::to_string(period));
  Normalizer n;
  n.lo = VectorXf::Constant(period, std::numeric_limits<float>::infinity());
  n.hi = VectorXf::Constant(period, -std::numeric_limits<float>::infinity());
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    const Eigen::Index k = r % period;
    n.lo(k) = std::min(n.lo(k), data.row(r).minCoeff());
    n.hi(k) = std::max(n.hi(k), data.row(r).maxCoeff());
  }
  for (int k = 0; k < period; ++k)
    if (n.hi(k) - n.lo(k) < 1e-6f) {  // constant feature: map onto 0
      n.lo(k) -= 1.0f;
      n.hi(k) += 1.0f;
    }
  return n;
}

MatrixXf Normalizer::normalize(const MatrixXf& x) const {
  if (x.rows() % period() != 0)
    throw DimensionError("Normalizer: " + std::to_string(x.rows()) +
                         " rows is not a multiple of " + std::to_string(period()));
  MatrixXf out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::Index k = r % period();
    const float scale = 2.0f / (hi(k) - lo(k));
    out.row(r) = (x.row(r).array() - lo(k)) * scale - 1.0f;
  }
  return out;
}

MatrixXf Normalizer::denormalize(const MatrixXf& x) const {
  if (x.rows() % period() != 0)
    throw DimensionError("Normalizer: " + std::to_string(x.rows()) +
                         " rows is not a multiple of " + std::to_string(period()));
  MatrixXf out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::Index k = r % period();
    const float half = 0.5f * (hi(k) - lo(k));
    out.row(r) = (x.row(r).array() + 1.0f) * half + lo(k);
  }
  return out;
}

double Dataset::action_std() const {
  double sum = 0, sq = 0;
  const double n = static_cast<double>(actions.size());
  for (Eigen::Index j = 0; j < actions.cols(); ++j)
    for (Eigen::Index i = 0; i < actions.rows(); ++i) {
      const double v = actions(i, j);
      sum += v;
      sq += v * v;
    }
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, sq / n - mean * mean));
}

ExpertEpisode run_expert(const Env& env, Rng& rng, double action_noise) {
  if (!(action_noise >= 0.0)) throw ConfigError("run_expert: action noise must be >= 0");
  const EnvSpec& spec = env.spec();
  ExpertEpisode ep;
  VectorXf s = env.reset(rng);
  ep.states.push_back(s);
  StepStatus st = env.status(s);
  float max_abs_x = 0;
  const int per_plan = action_noise > 0.0 ? 1 : spec.exec_horizon;
  while (st == StepStatus::running &&
         static_cast<int>(ep.actions.size()) < spec.episode_cap) {
    const MatrixXf plan = env.expert_plan(s, rng);
    if (action_noise > 0.0) ep.plans.push_back(plan);
    for (int e = 0; e < per_plan && st == StepStatus::running &&
                    static_cast<int>(ep.actions.size()) < spec.episode_cap;
         ++e) {
      VectorXf a = plan.col(e);
      if (action_noise > 0.0)
        for (Eigen::Index i = 0; i < a.size(); ++i)
          a(i) += static_cast<float>(action_noise * rng.normal());
      s = env.step(s, a);
      ep.actions.push_back(a);
      ep.states.push_back(s);
      st = env.status(s);
      if (std::abs(s(0)) > max_abs_x) {
        max_abs_x = std::abs(s(0));
        ep.mode = s(0) > 0 ? 1 : -1;
      }
    }
  }
  ep.success = st == StepStatus::success;
  if (spec.task != TaskId::multimodal_reach) ep.mode = 0;
  for (int h = 0; h + 1 < spec.horizon; ++h) {
    const VectorXf hold = s.head(spec.action_dim);
    s = env.step(s, hold);
    ep.actions.push_back(hold);
    ep.states.push_back(s);
  }
  return ep;
}

Dataset generate_dataset(const Env& env, int n_episodes, std::uint64_t seed,
                         std::vector<ExpertEpisode>* episodes, double action_noise) {
  if (n_episodes < 1) throw ConfigError("generate_dataset: need >= 1 episode");
  const EnvSpec& spec = env.spec();
  const int H = spec.horizon, A = spec.action_dim;
  std::vector<VectorXf> obs_cols, act_cols;
  Dataset d;
  d.task = to_string(spec.task);
  d.horizon = H;
  d.action_dim = A;
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(e));
    ExpertEpisode ep = run_expert(env, rng, action_noise);
    const bool planned = action_noise > 0.0;
    const int windows = planned ? static_cast<int>(ep.plans.size())
                                : static_cast<int>(ep.actions.size()) - H + 1;
    for (int i = 0; i < windows; ++i) {
      const VectorXf& prev = ep.states[i == 0 ? 0 : i - 1];
      obs_cols.push_back(stack_frames(prev, ep.states[i]));
      VectorXf seq(H * A);
      const VectorXf anchor = ep.states[i].head(A);
      for (int h = 0; h < H; ++h)
        seq.segment(h * A, A) = (planned ? VectorXf(ep.plans[i].col(h)) : ep.actions[i + h]) - anchor;
      act_cols.push_back(std::move(seq));
    }
    d.episode_windows.push_back(std::max(windows, 0));
    if (episodes) episodes->push_back(std::move(ep));
  }
  const auto n = static_cast<Eigen::Index>(act_cols.size());
  MatrixXf obs(spec.obs_dim(), n), act(H * A, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    obs.col(j) = obs_cols[j];
    act.col(j) = act_cols[j];
  }
  d.obs_norm = Normalizer::fit(obs, spec.obs_dim());
  d.act_norm = Normalizer::fit(act, A);
  d.obs = d.obs_norm.normalize(obs);
  d.actions = d.act_norm.normalize(act);
  return d;
}

namespace {

void write_vec(ByteWriter& w, const VectorXf& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f32(v(i));
}

VectorXf read_vec(ByteReader& r, Eigen::Index n) {
  VectorXf v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = r.f32();
  return v;
}

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  ByteWriter w;
  w.str16(d.task);
  w.u32(static_cast<std::uint32_t>(d.horizon));
  w.u32(static_cast<std::uint32_t>(d.action_dim));
  w.u32(static_cast<std::uint32_t>(d.obs_dim()));
  w.u32(static_cast<std::uint32_t>(d.size()));
  w.u32(static_cast<std::uint32_t>(d.episode_windows.size()));
  for (int c : d.episode_windows) w.u32(static_cast<std::uint32_t>(c));
  write_vec(w, d.obs_norm.lo);
  write_vec(w, d.obs_norm.hi);
  write_vec(w, d.act_norm.lo);
  write_vec(w, d.act_norm.hi);
  for (Eigen::Index j = 0; j < d.obs.cols(); ++j) {
    write_vec(w, d.obs.col(j));
    write_vec(w, d.actions.col(j));
  }
  write_framed_file(path, kDatasetMagic, kDatasetVersion, w.bytes());
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto payload = read_framed_file(path, kDatasetMagic, kDatasetVersion);
  ByteReader r(payload.data(), payload.size(), "dataset " + path.string());
  Dataset d;
  d.task = r.str16();
  d.horizon = static_cast<int>(r.u32());
  d.action_dim = static_cast<int>(r.u32());
  const auto C = static_cast<Eigen::Index>(r.u32());
  const auto n = static_cast<Eigen::Index>(r.u32());
  const auto episodes = r.u32();
  if (d.horizon < 1 || d.action_dim < 1)
    throw FormatError("dataset " + path.string() + ": bad horizon or action size");
  for (std::uint32_t e = 0; e < episodes; ++e)
    d.episode_windows.push_back(static_cast<int>(r.u32()));
  d.obs_norm.lo = read_vec(r, C);
  d.obs_norm.hi = read_vec(r, C);
  d.act_norm.lo = read_vec(r, d.action_dim);
  d.act_norm.hi = read_vec(r, d.action_dim);
  const Eigen::Index D = static_cast<Eigen::Index>(d.horizon) * d.action_dim;
  if (r.remaining() != static_cast<std::size_t>(n * (C + D) * 4))
    throw FormatError("dataset " + path.string() + ": payload size does not match " +
                      std::to_string(n) + " pairs");
  d.obs.resize(C, n);
  d.actions.resize(D, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    d.obs.col(j) = read_vec(r, C);
    d.actions.col(j) = read_vec(r, D);
  }
  return d;
}

MatrixXf decode_actions(const Dataset& d, const VectorXf& normalized,
                        const VectorXf& raw_obs) {
  if (normalized.size() != static_cast<Eigen::Index>(d.horizon) * d.action_dim)
    throw DimensionError("decode_actions: sequence has " +
                         std::to_string(normalized.size()) + " entries, expected " +
                         std::to_string(d.horizon * d.action_dim));
  if (raw_obs.size() != d.obs_dim() || d.obs_dim() % 2 != 0 ||
      d.obs_dim() / 2 < d.action_dim)
    throw DimensionError("decode_actions: observation has " +
                         std::to_string(raw_obs.size()) + " entries, expected " +
                         std::to_string(d.obs_dim()));
  const VectorXf anchor = raw_obs.tail(d.obs_dim() / 2).head(d.action_dim);
  MatrixXf out = d.act_norm.denormalize(normalized).reshaped(d.action_dim, d.horizon);
  out.colwise() += anchor;
  return out;
}

}  // namespace cpd
