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
#ifndef CPD_TESTS_SUPPORT_GRADCHECK_HPP_
#define CPD_TESTS_SUPPORT_GRADCHECK_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cpd/distillation/ctm.hpp"

// Central finite-difference checks of every hand-written reverse pass, in
// double precision on deliberately small networks.
namespace cpd::gradcheck {

using Mat = MatrixX<double>;
using Row = RowVectorX<double>;

inline constexpr double kStep = 1e-5;
inline constexpr double kFloor = 1e-6;  // denominators below this count as this

struct Result {
  std::string op;
  double max_rel_err = 0;
  long entries = 0;
};

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kFloor});
}

// Every entry of every tensor of p, against loss(p).
inline void check_params(const std::function<double(const ParamSet<double>&)>& loss,
                         ParamSet<double> p, const ParamSet<double>& analytic,
                         Result& r) {
  for (auto& [name, t] : p) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      double& v = t.value.data()[i];
      const double keep = v;
      v = keep + kStep;
      const double up = loss(p);
      v = keep - kStep;
      const double down = loss(p);
      v = keep;
      const double num = (up - down) / (2 * kStep);
      r.max_rel_err = std::max(r.max_rel_err, rel_err(analytic[name].data()[i], num));
      ++r.entries;
    }
  }
}

inline void check_input(const std::function<double(const Mat&)>& loss, Mat x,
                        const Mat& analytic, Result& r) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + kStep;
    const double up = loss(x);
    x.data()[i] = keep - kStep;
    const double down = loss(x);
    x.data()[i] = keep;
    r.max_rel_err = std::max(r.max_rel_err, rel_err(analytic.data()[i], (up - down) / (2 * kStep)));
    ++r.entries;
  }
}

// Small shared architecture: D = 6, observation 4, two hidden layers.
inline NetSpec small_spec(double dropout = 0.2) {
  NetSpec s;
  s.action_dim = 6;
  s.obs_dim = 4;
  s.hidden = {7, 5};
  s.time_embed = 4;
  s.cond_embed = 3;
  s.dropout = dropout;
  return s;
}

inline ScheduleParams small_schedule() {
  ScheduleParams p;
  p.size = 12;
  p.sigma_data = 0.6;
  return p;
}

// Mesh times for a batch, drawn from indices [lo, N-1].
inline Row mesh_times(const NoiseSchedule<double>& s, Eigen::Index n, int lo, Rng& rng) {
  Row t(n);
  for (Eigen::Index j = 0; j < n; ++j) t(j) = s.time(rng.uniform_int(lo, s.size() - 1));
  return t;
}

// All checks for one seed. Dropout masks are reproduced by re-seeding the
// stream used inside each loss evaluation.
inline std::vector<Result> run_seed(std::uint64_t seed) {
  std::vector<Result> out;
  Rng rng = Rng::derive(seed, 7);
  const std::uint64_t drop_seed = seed * 7919 + 1;
  const int batch = 3;
  const NetSpec spec = small_spec();

  {  // modulated MLP: parameters and input
    Result r{"cond_mlp"};
    const CondMlp<double> net(student_mlp_spec(spec));
    const ParamSet<double> p = net.init(rng);
    const Mat x = rng.normal_matrix<double>(net.spec().input_dim, batch);
    const std::array<Mat, 2> cond = {rng.normal_matrix<double>(net.spec().branches[0].input_dim, batch),
                                     rng.normal_matrix<double>(net.spec().branches[1].input_dim, batch)};
    const Mat w = rng.normal_matrix<double>(spec.action_dim, batch);
    auto value = [&](const ParamSet<double>& q, const Mat& xi) {
      Rng d(drop_seed);
      return (w.array() * net.forward(q, xi, cond, Mode::train, &d).array()).sum();
    };
    Rng d(drop_seed);
    CondMlp<double>::Cache cache;
    net.forward(p, x, cond, Mode::train, &d, &cache);
    ParamSet<double> g = p.zeros_like();
    const Mat dx = net.backward(p, cache, w, &g);
    check_params([&](const ParamSet<double>& q) { return value(q, x); }, p, g, r);
    check_input([&](const Mat& xi) { return value(p, xi); }, x, dx, r);
    out.push_back(r);
  }

  Teacher<double> teacher(spec, small_schedule());
  teacher.init(rng);
  const auto& sched = teacher.schedule();
  const Mat obs = rng.normal_matrix<double>(spec.obs_dim, batch);

  {  // preconditioned denoiser
    Result r{"teacher_denoise"};
    const Mat x = rng.normal_matrix<double>(spec.action_dim, batch, 2.0);
    const Row t = mesh_times(sched, batch, 0, rng);
    const Mat w = rng.normal_matrix<double>(spec.action_dim, batch);
    auto value = [&](const ParamSet<double>& q, const Mat& xi) {
      Rng d(drop_seed);
      return (w.array() * teacher.denoise(q, xi, t, obs, Mode::train, &d).array()).sum();
    };
    Rng d(drop_seed);
    Teacher<double>::Cache cache;
    teacher.denoise(teacher.params(), x, t, obs, Mode::train, &d, &cache);
    ParamSet<double> g = teacher.params().zeros_like();
    const Mat dx = teacher.backward(teacher.params(), cache, w, &g);
    check_params([&](const ParamSet<double>& q) { return value(q, x); }, teacher.params(), g, r);
    check_input([&](const Mat& xi) { return value(teacher.params(), xi); }, x, dx, r);
    out.push_back(r);
  }

  for (DsmWeighting wgt : {DsmWeighting::none, DsmWeighting::edm}) {
    Result r{"dsm_loss_" + to_string(wgt)};
    const auto b = make_pfode_batch<double>(sched, rng.normal_matrix<double>(spec.action_dim, batch),
                                            obs, rng);
    Rng d(drop_seed);
    const auto lg = dsm_loss_grad<double>(teacher, teacher.params(), b, Mode::train, &d, wgt);
    check_params([&](const ParamSet<double>& q) {
      Rng dd(drop_seed);
      return dsm_loss<double>(teacher, q, b, Mode::train, &dd, wgt);
    }, teacher.params(), lg.grads, r);
    out.push_back(r);
  }

  Student<double> student(spec, small_schedule());
  student.init(rng);

  {  // two-time jump, including s = 0 columns
    Result r{"student_jump"};
    const Row t = mesh_times(sched, batch, 1, rng);
    Row s(batch);
    for (Eigen::Index j = 0; j < batch; ++j) s(j) = j == 0 ? 0.0 : t(j) * rng.uniform();
    const Mat x = rng.normal_matrix<double>(spec.action_dim, batch, 2.0);
    const Mat w = rng.normal_matrix<double>(spec.action_dim, batch);
    auto value = [&](const ParamSet<double>& q, const Mat& xi) {
      Rng d(drop_seed);
      return (w.array() * student.jump(q, xi, t, s, obs, Mode::train, &d).array()).sum();
    };
    Rng d(drop_seed);
    Student<double>::Cache cache;
    student.jump(student.params(), x, t, s, obs, Mode::train, &d, &cache);
    ParamSet<double> g = student.params().zeros_like();
    const Mat dx = student.backward(student.params(), cache, w, &g);
    check_params([&](const ParamSet<double>& q) { return value(q, x); }, student.params(), g, r);
    check_input([&](const Mat& xi) { return value(student.params(), xi); }, x, dx, r);
    out.push_back(r);
  }

  {  // distance and its gradient in the first argument
    Result r{"pseudo_huber"};
    const Mat a = rng.normal_matrix<double>(spec.action_dim, batch);
    const Mat b = rng.normal_matrix<double>(spec.action_dim, batch);
    const auto l = pseudo_huber_batch<double>(a, b);
    check_input([&](const Mat& ai) { return pseudo_huber_batch<double>(ai, b).value; }, a, l.grad_a, r);
    out.push_back(r);
  }

  // Tracked and frozen parameters differ, so the check sees only the
  // tracked t -> s path.
  ParamSet<double> stop = student.params();
  for (auto& [_, t] : stop) t.value += rng.normal_matrix<double>(t.value.rows(), t.value.cols(), 0.05);
  for (Variant v : {Variant::cd, Variant::ctm, Variant::ctm_local, Variant::ct}) {
    DistillConfig cfg;
    cfg.variant = v;
    cfg.alpha = 0.7;
    cfg.beta = 1.3;
    const auto b = make_distill_batch<double>(sched, v == Variant::ct ? nullptr : &teacher,
                                              rng.normal_matrix<double>(spec.action_dim, batch),
                                              obs, cfg, rng);
    Result r{"ctm_loss_" + to_string(v)};
    ParamSet<double> g = student.params().zeros_like();
    {
      Rng d(drop_seed);
      ctm_loss<double>(student, student.params(), stop, b, cfg, d, &g);
    }
    check_params([&](const ParamSet<double>& q) {
      Rng d(drop_seed);
      return static_cast<double>(ctm_loss<double>(student, q, stop, b, cfg, d).value);
    }, student.params(), g, r);
    out.push_back(r);

    if (v != Variant::ctm_local) continue;
    Result rd{"student_dsm_loss"};
    ParamSet<double> gd = student.params().zeros_like();
    {
      Rng d(drop_seed);
      student_dsm_loss<double>(student, student.params(), b, d, &gd);
    }
    check_params([&](const ParamSet<double>& q) {
      Rng d(drop_seed);
      return static_cast<double>(student_dsm_loss<double>(student, q, b, d));
    }, student.params(), gd, rd);
    out.push_back(rd);

    Result rc{"combined_loss"};
    Rng d(drop_seed);
    const auto comb = combined_loss<double>(student, student.params(), stop, b, cfg, d);
    check_params([&](const ParamSet<double>& q) {
      Rng dd(drop_seed);
      return static_cast<double>(combined_loss<double>(student, q, stop, b, cfg, dd, false).total);
    }, student.params(), comb.grads, rc);
    out.push_back(rc);
  }
  return out;
}

}  // namespace cpd::gradcheck

#endif  // CPD_TESTS_SUPPORT_GRADCHECK_HPP_
