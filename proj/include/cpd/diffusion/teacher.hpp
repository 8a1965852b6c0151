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

#ifndef CPD_DIFFUSION_TEACHER_HPP_
#define CPD_DIFFUSION_TEACHER_HPP_

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "cpd/diffusion/schedule.hpp"
#include "cpd/numerics/cond_mlp.hpp"
#include "cpd/numerics/time_embedding.hpp"

namespace cpd {

// Architecture shared by teacher and student networks.
struct NetSpec {
  int action_dim = 1;  // D, flattened action sequence
  int obs_dim = 0;
  std::vector<int> hidden = {128, 128, 128};
  int time_embed = 32;
  int cond_embed = 64;
  double max_frequency = 16.0;
  double dropout = 0.2;
  // Also feed the observation to the first layer next to the scaled action.
  bool obs_input = true;

  bool operator==(const NetSpec&) const = default;
};

inline MlpSpec teacher_mlp_spec(const NetSpec& s) {
  MlpSpec m;
  m.input_dim = s.action_dim + (s.obs_input ? s.obs_dim : 0);
  m.output_dim = s.action_dim;
  m.hidden = s.hidden;
  m.branches = {{"main", s.obs_dim + s.time_embed, s.cond_embed}};
  m.dropout = s.dropout;
  return m;
}

// First-layer input: c_in-scaled actions, then the observation if enabled.
template <typename Scalar>
MatrixX<Scalar> network_input(const NetSpec& s, const MatrixX<Scalar>& x,
                              const RowVectorX<Scalar>& c_in,
                              const MatrixX<Scalar>& obs) {
  if (!s.obs_input) return x * c_in.asDiagonal();
  MatrixX<Scalar> in(s.action_dim + s.obs_dim, x.cols());
  in.topRows(s.action_dim) = x * c_in.asDiagonal();
  in.bottomRows(s.obs_dim) = obs;
  return in;
}

// Preconditioned denoiser
//   D(x, t; o) = c_skip(t) x + c_out(t) F([c_in(t) x; o], [o; emb(t)])
// with the EDM coefficients. D(x, t) -> x as t -> 0.
template <typename Scalar>
class Teacher {
 public:
  using Matrix = MatrixX<Scalar>;
  using Row = RowVectorX<Scalar>;

  struct Cache {
    typename CondMlp<Scalar>::Cache net;
    Row skip, out, in;
  };

  Teacher(NetSpec spec, ScheduleParams schedule)
      : spec_(std::move(spec)),
        schedule_(schedule),
        net_(teacher_mlp_spec(spec_)),
        embedding_(spec_.time_embed, spec_.max_frequency) {}

  void init(Rng& rng) { params_ = net_.init(rng); }

  const NetSpec& spec() const { return spec_; }
  const NoiseSchedule<Scalar>& schedule() const { return schedule_; }
  const CondMlp<Scalar>& net() const { return net_; }
  const TimeEmbedding<Scalar>& embedding() const { return embedding_; }
  ParamSet<Scalar>& params() { return params_; }
  const ParamSet<Scalar>& params() const { return params_; }
  void set_params(ParamSet<Scalar> p) {
    p.require_same_layout(net_.layout(), "Teacher::set_params");
    params_ = std::move(p);
  }

  Matrix main_cond(const Matrix& obs, const Row& t) const {
    if (obs.rows() != spec_.obs_dim || obs.cols() != t.size())
      throw DimensionError("Teacher: observation 'o' is " +
                           shape_str(obs.rows(), obs.cols()) + ", expected " +
                           shape_str(spec_.obs_dim, t.size()));
    Matrix c(spec_.obs_dim + spec_.time_embed, t.size());
    c.topRows(spec_.obs_dim) = obs;
    embedding_.embed(t, c.bottomRows(spec_.time_embed));
    return c;
  }

  // Batched denoiser, one time per column.
  Matrix denoise(const ParamSet<Scalar>& p, const Matrix& x, const Row& t,
                 const Matrix& obs, Mode mode = Mode::eval, Rng* rng = nullptr,
                 Cache* cache = nullptr) const {
    if (x.cols() != t.size())
      throw DimensionError("Teacher::denoise: x has " + std::to_string(x.cols()) +
                           " columns but " + std::to_string(t.size()) + " times");
    for (Eigen::Index j = 0; j < t.size(); ++j)
      if (!(t(j) > Scalar(0)))
        throw Error("Teacher::denoise: t must be > 0 (got " +
                    std::to_string(static_cast<double>(t(j))) + ")");
    Row skip(t.size()), out(t.size()), in(t.size());
    const Scalar sd = schedule_.sigma_data();
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const auto c = edm_precond(t(j), sd);
      skip(j) = c.skip;
      out(j) = c.out;
      in(j) = c.in;
    }
    const std::array<Matrix, 1> cond = {main_cond(obs, t)};
    const Matrix net_in = network_input(spec_, x, in, obs);
    const Matrix f = net_.forward(p, net_in, cond, mode, rng,
                                  cache ? &cache->net : nullptr);
    if (cache) {
      cache->skip = skip;
      cache->out = out;
      cache->in = in;
    }
    return x * skip.asDiagonal() + f * out.asDiagonal();
  }

  Matrix denoise(const Matrix& x, const Row& t, const Matrix& obs) const {
    return denoise(params_, x, t, obs);
  }

  // dL/dx given dL/dD; parameter gradients accumulate into *grads.
  Matrix backward(const ParamSet<Scalar>& p, const Cache& cache,
                  const Matrix& d_out, ParamSet<Scalar>* grads) const {
    const Matrix df = d_out * cache.out.asDiagonal();
    const Matrix d_in = net_.backward(p, cache.net, df, grads);
    return d_out * cache.skip.asDiagonal() +
           d_in.topRows(spec_.action_dim) * cache.in.asDiagonal();
  }

  // Denoiser bound to a fixed observation batch, for the ODE solvers.
  auto denoiser(const Matrix& obs) const {
    return [this, &obs](const Matrix& x, const Row& t) {
      return denoise(params_, x, t, obs);
    };
  }

 private:
  NetSpec spec_;
  NoiseSchedule<Scalar> schedule_;
  CondMlp<Scalar> net_;
  TimeEmbedding<Scalar> embedding_;
  ParamSet<Scalar> params_;
};

}  // namespace cpd

#endif  // CPD_DIFFUSION_TEACHER_HPP_
