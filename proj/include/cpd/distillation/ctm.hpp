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

#ifndef CPD_DISTILLATION_CTM_HPP_
#define CPD_DISTILLATION_CTM_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cpd/diffusion/losses.hpp"
#include "cpd/diffusion/solver.hpp"
#include "cpd/distillation/student.hpp"

namespace cpd {

enum class Variant { cd, ctm, ctm_local, ct };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::cd: return "CD";
    case Variant::ctm: return "CTM";
    case Variant::ctm_local: return "CTM-local";
    case Variant::ct: return "CT";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  std::string k = s;
  std::transform(k.begin(), k.end(), k.begin(), ::tolower);
  std::replace(k.begin(), k.end(), '_', '-');
  if (k == "cd") return Variant::cd;
  if (k == "ctm") return Variant::ctm;
  if (k == "ctm-local") return Variant::ctm_local;
  if (k == "ct") return Variant::ct;
  throw ConfigError("unknown objective variant '" + s +
                    "' (expected cd, ctm, ctm-local or ct)");
}

inline constexpr int kMaxTeacherSpan = 10;

struct DistillConfig {
  double alpha = 1.0;  // consistency weight
  double beta = 1.0;   // denoising weight
  Variant variant = Variant::ctm_local;
  int max_span = kMaxTeacherSpan;  // CTM only: t - u <= max_span
  bool dropout_s_to_0 = true;
  int target_refresh = 1;  // steps between stop-gradient target refreshes
};

inline void validate(const DistillConfig& c, bool have_teacher) {
  if (!(c.alpha >= 0.0) || !(c.beta >= 0.0))
    throw ConfigError("distill: alpha and beta must be >= 0");
  if (c.alpha == 0.0 && c.beta == 0.0)
    throw ConfigError("distill: alpha and beta cannot both be zero");
  if (c.max_span < 1 || c.max_span > kMaxTeacherSpan)
    throw ConfigError("distill: max_span must lie in [1, " +
                      std::to_string(kMaxTeacherSpan) + "]");
  if (c.target_refresh < 1)
    throw ConfigError("distill: target_refresh must be >= 1");
  if (c.variant != Variant::ct && !have_teacher)
    throw ConfigError("distill: variant " + to_string(c.variant) +
                      " needs a teacher");
}

// Mesh indices 0 <= s < u < t <= N-1.
struct Triple {
  int t = 0;
  int u = 0;
  int s = 0;
};

inline Triple sample_triple(int mesh_size, Variant variant, int max_span,
                            Rng& rng) {
  if (mesh_size < 3)
    throw ConfigError("sample_triple: mesh needs N >= 3, got " +
                      std::to_string(mesh_size));
  Triple tr;
  tr.t = rng.uniform_int(2, mesh_size - 1);
  switch (variant) {
    case Variant::cd:
      tr.u = tr.t - 1;
      tr.s = 0;
      break;
    case Variant::ctm_local:
    case Variant::ct:
      tr.u = tr.t - 1;
      tr.s = rng.uniform_int(0, tr.u - 1);
      break;
    case Variant::ctm:
      tr.s = rng.uniform_int(0, tr.t - 2);
      tr.u = rng.uniform_int(std::max(tr.t - max_span, tr.s + 1), tr.t - 1);
      break;
  }
  return tr;
}

template <typename Scalar>
struct JumpResult {
  MatrixX<Scalar> x;
  long nfe = 0;  // summed over columns
};

// Teacher Heun steps over consecutive mesh indices t -> u, per column.
// Evaluated in eval mode without a cache: nothing here is differentiated.
template <typename Scalar>
JumpResult<Scalar> teacher_jump(const Teacher<Scalar>& teacher,
                                const MatrixX<Scalar>& x_t,
                                const std::vector<int>& t_idx,
                                const std::vector<int>& u_idx,
                                const MatrixX<Scalar>& obs) {
  const auto n = static_cast<std::size_t>(x_t.cols());
  if (t_idx.size() != n || u_idx.size() != n)
    throw DimensionError("teacher_jump: index vectors must match the batch");
  for (std::size_t j = 0; j < n; ++j)
    if (!(u_idx[j] < t_idx[j]))
      throw Error("teacher_jump: u must be below t");
  const auto& sched = teacher.schedule();
  JumpResult<Scalar> r{x_t, 0};
  std::vector<int> cur = t_idx;
  while (true) {
    std::vector<int> active;
    for (std::size_t j = 0; j < n; ++j)
      if (cur[j] > u_idx[j]) active.push_back(static_cast<int>(j));
    if (active.empty()) break;
    const auto m = static_cast<Eigen::Index>(active.size());
    MatrixX<Scalar> xa(x_t.rows(), m), oa(obs.rows(), m);
    RowVectorX<Scalar> ta(m), tb(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const int j = active[static_cast<std::size_t>(k)];
      xa.col(k) = r.x.col(j);
      oa.col(k) = obs.col(j);
      ta(k) = sched.time(cur[j]);
      tb(k) = sched.time(cur[j] - 1);
    }
    const MatrixX<Scalar> xb = heun_step<Scalar>(teacher.denoiser(oa), xa, ta, tb);
    for (Eigen::Index k = 0; k < m; ++k) {
      const int j = active[static_cast<std::size_t>(k)];
      r.x.col(j) = xb.col(k);
      cur[j] -= 1;
    }
    r.nfe += 2 * m;
  }
  return r;
}

// Teacher-free target: the same noise draw scaled to time u.
template <typename Scalar>
MatrixX<Scalar> ct_jump(const MatrixX<Scalar>& x0, const RowVectorX<Scalar>& u,
                        const MatrixX<Scalar>& eps) {
  return noise_sample<Scalar>(x0, u, eps);
}

// One distillation minibatch: clean actions, noise, triples and both start
// positions. x_u is produced under stop-gradient.
template <typename Scalar>
struct DistillBatch {
  MatrixX<Scalar> x0, obs, eps;
  std::vector<Triple> triples;
  RowVectorX<Scalar> t, u, s;
  MatrixX<Scalar> x_t, x_u;
  long teacher_nfe = 0;
};

template <typename Scalar>
DistillBatch<Scalar> make_distill_batch(const NoiseSchedule<Scalar>& schedule,
                                        const Teacher<Scalar>* teacher,
                                        MatrixX<Scalar> x0, MatrixX<Scalar> obs,
                                        const DistillConfig& cfg, Rng& rng) {
  DistillBatch<Scalar> b;
  const Eigen::Index n = x0.cols();
  b.triples.resize(static_cast<std::size_t>(n));
  std::vector<int> ti(b.triples.size()), ui(b.triples.size()), si(b.triples.size());
  for (std::size_t j = 0; j < b.triples.size(); ++j) {
    b.triples[j] = sample_triple(schedule.size(), cfg.variant, cfg.max_span, rng);
    ti[j] = b.triples[j].t;
    ui[j] = b.triples[j].u;
    si[j] = b.triples[j].s;
  }
  b.t = schedule.times_at(ti);
  b.u = schedule.times_at(ui);
  b.s = schedule.times_at(si);
  b.eps = rng.normal_matrix<Scalar>(x0.rows(), n);
  b.x_t = noise_sample<Scalar>(x0, b.t, b.eps);
  if (cfg.variant == Variant::ct) {
    b.x_u = ct_jump<Scalar>(x0, b.u, b.eps);
  } else {
    if (teacher == nullptr) throw ConfigError("distill batch needs a teacher");
    auto jr = teacher_jump<Scalar>(*teacher, b.x_t, ti, ui, obs);
    b.x_u = std::move(jr.x);
    b.teacher_nfe = jr.nfe;
  }
  b.x0 = std::move(x0);
  b.obs = std::move(obs);
  return b;
}

enum class GradPath { through_t_to_s, severed };

template <typename Scalar>
struct CtmTerms {
  Scalar value = 0;
  // Mean pseudo-Huber between x_s^(t) and x_s^(u) before the s -> 0 passes.
  Scalar dist_at_s = 0;
};

// L = mean d( g-(g(x_t, t, s), s, 0), g-(g-(x_u, u, s), s, 0) )
//
// `params` is tracked; `stop` is the frozen target copy. Only the t -> s jump
// feeds parameter gradients; the s -> 0 pass on that branch is
// differentiated with respect to its input only.
template <typename Scalar>
CtmTerms<Scalar> ctm_loss(const Student<Scalar>& student,
                          const ParamSet<Scalar>& params,
                          const ParamSet<Scalar>& stop,
                          const DistillBatch<Scalar>& b, const DistillConfig& cfg,
                          Rng& rng, ParamSet<Scalar>* grads = nullptr,
                          GradPath path = GradPath::through_t_to_s) {
  using Row = RowVectorX<Scalar>;
  const Row zero = Row::Zero(b.x_t.cols());
  const Mode s0_mode = cfg.dropout_s_to_0 ? Mode::train : Mode::eval;

  typename Student<Scalar>::Cache c_ts, c_s0;
  const MatrixX<Scalar> xs_t =
      student.jump(params, b.x_t, b.t, b.s, b.obs, Mode::train, &rng, &c_ts);
  const MatrixX<Scalar> xs_u =
      student.jump(stop, b.x_u, b.u, b.s, b.obs, Mode::train, &rng);
  const MatrixX<Scalar> y_t =
      student.jump(stop, xs_t, b.s, zero, b.obs, s0_mode, &rng, &c_s0);
  const MatrixX<Scalar> y_u =
      student.jump(stop, xs_u, b.s, zero, b.obs, s0_mode, &rng);

  const Scalar c = static_cast<Scalar>(pseudo_huber_c(static_cast<int>(b.x_t.rows())));
  const auto loss = pseudo_huber_batch<Scalar>(y_t, y_u, c);
  if (!std::isfinite(static_cast<double>(loss.value)))
    throw NumericalError("ctm_loss: non-finite loss");
  CtmTerms<Scalar> out;
  out.value = loss.value;
  out.dist_at_s = pseudo_huber_batch<Scalar>(xs_t, xs_u, c).value;
  if (grads && path == GradPath::through_t_to_s) {
    const MatrixX<Scalar> d_xs = student.backward(stop, c_s0, loss.grad_a, nullptr);
    student.backward(params, c_ts, d_xs, grads);
  }
  return out;
}

// Student-as-denoiser term: mean d(x0, g(x_t, t, 0; o)).
template <typename Scalar>
Scalar student_dsm_loss(const Student<Scalar>& student,
                        const ParamSet<Scalar>& params,
                        const DistillBatch<Scalar>& b, Rng& rng,
                        ParamSet<Scalar>* grads = nullptr) {
  const RowVectorX<Scalar> zero = RowVectorX<Scalar>::Zero(b.x_t.cols());
  typename Student<Scalar>::Cache cache;
  const MatrixX<Scalar> x0_hat =
      student.jump(params, b.x_t, b.t, zero, b.obs, Mode::train, &rng, &cache);
  const auto loss = pseudo_huber_batch<Scalar>(x0_hat, b.x0);
  if (!std::isfinite(static_cast<double>(loss.value)))
    throw NumericalError("student_dsm_loss: non-finite loss");
  if (grads) student.backward(params, cache, loss.grad_a, grads);
  return loss.value;
}

template <typename Scalar>
struct DistillLoss {
  Scalar total = 0;
  Scalar ctm = 0;
  Scalar dsm = 0;
  Scalar dist_at_s = 0;
  ParamSet<Scalar> grads;
};

// alpha * L_CTM + beta * L_DSM and its gradient with respect to `params`.
// The consistency term consumes rng before the denoising term.
template <typename Scalar>
DistillLoss<Scalar> combined_loss(const Student<Scalar>& student,
                                  const ParamSet<Scalar>& params,
                                  const ParamSet<Scalar>& stop,
                                  const DistillBatch<Scalar>& b,
                                  const DistillConfig& cfg, Rng& rng,
                                  bool with_grads = true) {
  DistillLoss<Scalar> out;
  ParamSet<Scalar> g_ctm, g_dsm;
  if (with_grads) {
    g_ctm = params.zeros_like();
    g_dsm = params.zeros_like();
  }
  const auto terms =
      ctm_loss<Scalar>(student, params, stop, b, cfg, rng, with_grads ? &g_ctm : nullptr);
  out.ctm = terms.value;
  out.dist_at_s = terms.dist_at_s;
  out.dsm = student_dsm_loss<Scalar>(student, params, b, rng,
                                     with_grads ? &g_dsm : nullptr);
  const Scalar alpha = static_cast<Scalar>(cfg.alpha);
  const Scalar beta = static_cast<Scalar>(cfg.beta);
  out.total = alpha * out.ctm + beta * out.dsm;
  if (with_grads) {
    out.grads = params.zeros_like();
    out.grads.add_scaled(g_ctm, alpha);
    out.grads.add_scaled(g_dsm, beta);
    require_finite(out.grads, "combined_loss");
  }
  return out;
}

}  // namespace cpd

#endif  // CPD_DISTILLATION_CTM_HPP_
