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
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cpd/diffusion/train.hpp"
#include "cpd/diffusion/solver.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace cpd;
using Mat = MatrixX<double>;
using Row = RowVectorX<double>;

namespace {

// Optimal denoiser when the data are N(0, sd^2 I).
auto gaussian_denoiser(double sd) {
  return [sd](const Mat& x, const Row& t) {
    Row k(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) k(j) = sd * sd / (sd * sd + t(j) * t(j));
    return Mat(x * k.asDiagonal());
  };
}

double closed_form_ratio(double sd, double from, double to) {
  return std::sqrt((sd * sd + to * to) / (sd * sd + from * from));
}

NetSpec oracle_teacher_spec() {
  NetSpec s;
  s.action_dim = 2;
  s.obs_dim = 1;
  s.hidden = {3};
  s.time_embed = 2;
  s.cond_embed = 2;
  s.dropout = 0.0;
  return s;
}

}  // namespace

TEST_CASE("mesh endpoints, linear case and the warped oracle") {
  ScheduleParams p;
  p.size = 2;
  CHECK(mesh(p) == std::vector<double>{0.002, 80.0});

  p.size = 5;
  p.rho = 1.0;
  p.t_min = 0.0;
  const auto lin = mesh(p);
  CHECK(lin.front() == kScheduleFloor);
  for (int i = 1; i < 5; ++i)
    CHECK(lin[i] - lin[i - 1] == doctest::Approx((80.0 - kScheduleFloor) / 4).epsilon(1e-12));

  ScheduleParams w;
  w.size = 10;
  const auto t = mesh(w);
  for (int i = 0; i < 10; ++i) CHECK(t[i] == doctest::Approx(oracle::kMeshRho7N10[i]).epsilon(1e-14));
}

TEST_CASE("invalid schedules are configuration errors") {
  ScheduleParams p;
  p.size = 1;
  CHECK_THROWS_AS(mesh(p), ConfigError);
  p = {};
  p.t_min = 80.0;
  CHECK_THROWS_AS(mesh(p), ConfigError);
  p = {};
  p.sigma_data = 0.0;
  CHECK_THROWS_AS(NoiseSchedule<float>{p}, ConfigError);
}

TEST_CASE("mesh is deterministic and strictly increasing for random valid parameters") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    ScheduleParams p;
    p.t_min = std::pow(10.0, -4.0 + 3.0 * rng.uniform());
    p.t_max = p.t_min * (2.0 + 1000.0 * rng.uniform());
    p.rho = 0.5 + 9.0 * rng.uniform();
    p.size = rng.uniform_int(2, 200);
    const auto a = mesh(p), b = mesh(p);
    CHECK(a == b);
    CHECK(a.front() == p.t_min);
    CHECK(a.back() == p.t_max);
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i] > a[i - 1]);
  }
}

TEST_CASE("noise_sample trivial cases and variance growth") {
  Rng rng(12);
  const Mat x0 = rng.normal_matrix<double>(3, 4);
  CHECK(noise_sample<double>(x0, Row::Constant(4, 2.0), Mat::Zero(3, 4)) == x0);
  CHECK(noise_sample<double>(x0, Row::Zero(4), rng.normal_matrix<double>(3, 4)) == x0);

  const int n = 100000;
  const double t = 1.7;
  const Mat base = rng.normal_matrix<double>(1, n, 0.5);
  const Mat xt = noise_sample<double>(base, Row::Constant(n, t), rng.normal_matrix<double>(1, n));
  const double mean = xt.mean();
  const double var = (xt.array() - mean).square().sum() / (n - 1);
  // Var = 0.25 + t^2 = 3.14; the sampling sd of the estimate is about 0.014.
  CHECK(var == doctest::Approx(0.25 + t * t).epsilon(0.02));
  CHECK_THROWS(noise_sample<double>(x0, Row::Constant(4, -1.0), x0));
}

TEST_CASE("preconditioning limits") {
  const auto lo = edm_precond(1e-6, 0.5);
  CHECK(lo.skip == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(lo.out == doctest::Approx(0.0).epsilon(1e-5));
  const auto c = edm_precond(0.7, 0.5);
  CHECK(c.skip == doctest::Approx(0.25 / 0.74));
  CHECK(c.out == doctest::Approx(0.35 / std::sqrt(0.74)));
  CHECK(c.in == doctest::Approx(1.0 / std::sqrt(0.74)));
}

TEST_CASE("teacher with a zero output layer returns c_skip x") {
  NetSpec s = oracle_teacher_spec();
  Teacher<double> t(s, ScheduleParams{});
  Rng rng(1);
  t.init(rng);
  t.params()["out.weight"].setZero();
  t.params()["out.bias"].setZero();
  const Mat x = rng.normal_matrix<double>(2, 5);
  const Row tt = Row::LinSpaced(5, 0.01, 50.0);
  const Mat d = t.denoise(x, tt, rng.normal_matrix<double>(1, 5));
  for (Eigen::Index j = 0; j < 5; ++j)
    CHECK((d.col(j) - edm_precond(tt(j), 0.5).skip * x.col(j)).norm() < 1e-15);
}

TEST_CASE("teacher denoise near t_min is close to the identity") {
  NetSpec s = oracle_teacher_spec();
  Teacher<float> t(s, ScheduleParams{});
  Rng rng(2);
  t.init(rng);
  const MatrixXf x = rng.normal_matrix<float>(2, 50);
  const MatrixXf o = rng.normal_matrix<float>(1, 50);
  const RowVectorXf tmin = RowVectorXf::Constant(50, t.schedule().t_min());
  const MatrixXf d = t.denoise(x, tmin, o);
  // |D - x| <= (1 - c_skip)|x| + c_out |F|, with c_out(0.002) ~ 0.002.
  CHECK((d - x).cwiseAbs().maxCoeff() < 0.01f);
  CHECK_THROWS(t.denoise(x, RowVectorXf::Zero(50), o));
  CHECK_THROWS_AS(t.denoise(x, tmin, MatrixXf::Zero(3, 50)), DimensionError);
}

TEST_CASE("denoiser output on one hand-set sample matches the oracle") {
  Teacher<double> t(oracle_teacher_spec(), [] {
    ScheduleParams p;
    p.sigma_data = 0.5;
    return p;
  }());
  Rng rng(0);
  t.init(rng);
  oracle::fill_sine(t.params());
  PfodeBatch<double> b;
  b.x0 = (Mat(2, 1) << 0.3, -0.2).finished();
  b.eps = (Mat(2, 1) << 0.5, 1.0).finished();
  b.t = Row::Constant(1, 0.7);
  b.obs = Mat::Constant(1, 1, 0.4);
  b.x_t = noise_sample<double>(b.x0, b.t, b.eps);
  const Mat d = t.denoise(b.x_t, b.t, b.obs);
  CHECK(d(0) == doctest::Approx(oracle::kDenoise[0]).epsilon(1e-12));
  CHECK(d(1) == doctest::Approx(oracle::kDenoise[1]).epsilon(1e-12));
  CHECK(dsm_loss<double>(t, t.params(), b, Mode::eval, nullptr, DsmWeighting::none) ==
        doctest::Approx(oracle::kDsmNone).epsilon(1e-12));
  CHECK(dsm_loss<double>(t, t.params(), b, Mode::eval, nullptr, DsmWeighting::edm) ==
        doctest::Approx(oracle::kDsmEdm).epsilon(1e-12));
}

TEST_CASE("PFODE derivative") {
  const auto den = gaussian_denoiser(0.5);
  Rng rng(3);
  const Mat x = rng.normal_matrix<double>(3, 4);
  const Row t = Row::LinSpaced(4, 0.1, 10.0);
  const Mat d = pfode_derivative<double>(den, x, t);
  for (Eigen::Index j = 0; j < 4; ++j)
    CHECK((d.col(j) - x.col(j) * (t(j) / (0.25 + t(j) * t(j)))).norm() < 1e-14);
  CHECK((pfode_derivative<double>(den, Mat(2 * x), t) - 2 * d).norm() < 1e-14);
  auto fixed = [](const Mat& xi, const Row&) { return xi; };
  CHECK(pfode_derivative<double>(fixed, x, t).norm() == 0.0);
  CHECK_THROWS(pfode_derivative<double>(den, x, Row::Zero(4)));
}

TEST_CASE("Heun equals Euler for a constant derivative field") {
  // (x - D) / t = v  <=>  D = x - v t
  const Mat v = (Mat(2, 1) << 0.3, -1.2).finished();
  auto den = [&](const Mat& x, const Row& t) { return Mat(x - v * t); };
  const Mat x = (Mat(2, 1) << 1.0, 2.0).finished();
  const Mat h = heun_step<double>(den, x, 2.0, 1.5);
  const Mat e = heun_step<double>(den, x, 2.0, 1.5, true);
  CHECK((h - e).norm() < 1e-15);
  CHECK((h - (x - 0.5 * v)).norm() < 1e-15);
}

TEST_CASE("Gaussian world: Heun steps follow the closed-form trajectory") {
  const double sd = 0.5;
  ScheduleParams p;
  p.size = 41;
  p.sigma_data = sd;
  const NoiseSchedule<double> sched(p);
  Rng rng(4);
  const Mat xT = rng.normal_matrix<double>(4, 16, 80.0);
  const auto r = solve<double>(gaussian_denoiser(sd), sched, xT, full_mesh_indices(41));
  CHECK(r.nfe == 80);
  const Mat exact = xT * closed_form_ratio(sd, 80.0, sched.t_min());
  // Endpoint error of an independent implementation on the same mesh.
  CHECK((r.x - exact).norm() / exact.norm() == doctest::Approx(oracle::kHeunGaussian40).epsilon(1e-6));

  // Endpoint error shrinks about 4x per step halving.
  std::vector<double> err;
  for (int segments : {10, 20, 40, 80}) {
    ScheduleParams q = p;
    q.size = segments + 1;
    const NoiseSchedule<double> s(q);
    const Mat x1 = Mat::Ones(1, 1);
    const auto res = solve<double>(gaussian_denoiser(sd), s, x1, full_mesh_indices(q.size));
    err.push_back(std::abs(res.x(0) - closed_form_ratio(sd, 80.0, s.t_min())));
  }
  for (std::size_t i = 1; i < err.size(); ++i) CHECK(std::log2(err[i - 1] / err[i]) >= 1.8);
}

TEST_CASE("solve: single segment, NFE accounting, Euler fallback") {
  const NoiseSchedule<double> sched;
  const auto den = gaussian_denoiser(0.5);
  Rng rng(5);
  const Mat x = rng.normal_matrix<double>(2, 3, 5.0);
  const std::vector<int> one = {10, 9};
  const auto r = solve<double>(den, sched, x, one);
  CHECK(r.x == heun_step<double>(den, x, sched.time(10), sched.time(9)));
  CHECK(r.nfe == 2);
  const auto full = solve<double>(den, sched, x, full_mesh_indices(sched.size()));
  CHECK(full.nfe == 2 * (sched.size() - 1));
  const auto fb = solve<double>(den, sched, x, full_mesh_indices(sched.size()), {true});
  CHECK(fb.nfe == 2 * (sched.size() - 1) - 1);
  const std::vector<int> up = {3, 5};
  CHECK_THROWS(solve<double>(den, sched, x, up));
}

TEST_CASE("Gaussian world: full-mesh samples have the data variance") {
  const double sd = 0.5;
  ScheduleParams p;
  p.sigma_data = sd;
  const NoiseSchedule<double> sched(p);
  Rng rng(6);
  const int n = 10000;
  const auto r = solve<double>(gaussian_denoiser(sd), sched, rng.normal_matrix<double>(1, n, 80.0),
                               full_mesh_indices(sched.size()));
  const double var = r.x.array().square().mean();
  // Relative sampling error of a variance over 1e4 draws is about 1.4%.
  CHECK(var == doctest::Approx(sd * sd).epsilon(0.05));
}

TEST_CASE("pseudo-Huber distance") {
  const Eigen::Vector3d a(1.0, 2.0, -1.0);
  CHECK(pseudo_huber<double>(a, a) == 0.0);
  const Eigen::Vector2d x(3.0, 0.0), z(0.0, 0.0);
  CHECK(pseudo_huber<double>(x, z, 4.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pseudo_huber_c(160) == doctest::Approx(oracle::kHuberC160).epsilon(1e-12));
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd u = Eigen::VectorXd::Random(5), v = Eigen::VectorXd::Random(5);
    CHECK(pseudo_huber<double>(u, v) >= 0.0);
  }
}

TEST_CASE("denoising loss at t_min with no noise is near zero") {
  NetSpec s = oracle_teacher_spec();
  Teacher<float> t(s, ScheduleParams{});
  Rng rng(8);
  t.init(rng);
  PfodeBatch<float> b;
  b.x0 = rng.normal_matrix<float>(2, 32, 0.5);
  b.eps = MatrixXf::Zero(2, 32);
  b.t = RowVectorXf::Constant(32, t.schedule().t_min());
  b.obs = rng.normal_matrix<float>(1, 32);
  b.x_t = b.x0;
  CHECK(dsm_loss<float>(t, t.params(), b, Mode::eval, nullptr, DsmWeighting::none) < 5e-3f);
}

TEST_CASE("Gaussian world: the optimal denoiser sits at the analytic loss floor") {
  // For D = 1 the residual x0 - D*(x_t) is N(0, r^2) with r = sd t / sqrt(sd^2 + t^2),
  // so E|residual| = r sqrt(2 / pi), and c << r makes pseudo-Huber ~ |residual|.
  const double sd = 0.5, t = 0.8;
  const int n = 200000;
  Rng rng(9);
  const Mat x0 = rng.normal_matrix<double>(1, n, sd);
  const Mat xt = noise_sample<double>(x0, Row::Constant(n, t), rng.normal_matrix<double>(1, n));
  const Mat d = gaussian_denoiser(sd)(xt, Row::Constant(n, t));
  const double loss = pseudo_huber_batch<double>(d, x0).value;
  const double r = sd * t / std::sqrt(sd * sd + t * t);
  CHECK(loss == doctest::Approx(r * std::sqrt(2.0 / std::numbers::pi)).epsilon(0.01));
}

TEST_CASE("training batches draw mesh indices 1..N-1 and satisfy x_t = x0 + t eps") {
  const NoiseSchedule<float> sched;
  Rng rng(10);
  const auto b = make_pfode_batch<float>(sched, rng.normal_matrix<float>(3, 20000),
                                         MatrixXf::Zero(0, 20000), rng);
  std::vector<int> count(sched.size(), 0);
  for (int i : b.t_index) ++count[i];
  CHECK(count[0] == 0);
  for (int i = 1; i < sched.size(); ++i) CHECK(count[i] > 0);
  CHECK(b.x_t == noise_sample<float>(b.x0, b.t, b.eps));
}

TEST_CASE("denoising loss gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (const auto& r : gradcheck::run_seed(seed))
      if (r.op.rfind("dsm_loss", 0) == 0 || r.op == "teacher_denoise") {
        INFO(r.op);
        CHECK(r.max_rel_err < 1e-3);
      }
}

TEST_CASE("a fixed seed reproduces the teacher training trajectory bit for bit") {
  NetSpec s = oracle_teacher_spec();
  s.hidden = {16, 16};
  s.dropout = 0.2;
  auto train = [&] {
    Teacher<float> t(s, ScheduleParams{});
    Rng rng(21);
    t.init(rng);
    const MatrixXf a = rng.normal_matrix<float>(2, 64, 0.5);
    const MatrixXf o = rng.normal_matrix<float>(1, 64);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch = 16;
    const auto log = train_teacher<float>(t, a, o, cfg, rng);
    return std::make_pair(t.params(), log.back().loss);
  };
  const auto a = train(), b = train();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
