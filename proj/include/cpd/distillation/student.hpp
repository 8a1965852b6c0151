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

#ifndef CPD_DISTILLATION_STUDENT_HPP_
#define CPD_DISTILLATION_STUDENT_HPP_

#include <array>
#include <optional>
#include <string>
#include <utility>

#include "cpd/diffusion/teacher.hpp"

namespace cpd {

inline constexpr const char* kStopBranch = "stop";

// Teacher architecture plus a "stop" conditioning branch fed with the
// embedding of the stop time s and a flag channel that marks s = 0.
inline MlpSpec student_mlp_spec(const NetSpec& s) {
  MlpSpec m = teacher_mlp_spec(s);
  m.branches.push_back({kStopBranch, s.time_embed + 1, s.cond_embed});
  return m;
}

// Two-time jump function
//   g(x, t, s; o) = (s/t) x + (1 - s/t) G(x, t, s; o)
//   G = c_skip(t) x + c_out(t) F([c_in(t) x; o], [o; emb(t)], [emb(s); 1{s=0}])
// so that g(x, t, t; o) = x for any parameters.
template <typename Scalar>
class Student {
 public:
  using Matrix = MatrixX<Scalar>;
  using Row = RowVectorX<Scalar>;

  struct Cache {
    typename CondMlp<Scalar>::Cache net;
    Row skip, out, in, ratio;
  };

  Student(NetSpec spec, ScheduleParams schedule)
      : spec_(std::move(spec)),
        schedule_(schedule),
        net_(student_mlp_spec(spec_)),
        embedding_(spec_.time_embed, spec_.max_frequency) {}

  void init(Rng& rng) { params_ = net_.init(rng); }

  const NetSpec& spec() const { return spec_; }
  const NoiseSchedule<Scalar>& schedule() const { return schedule_; }
  const CondMlp<Scalar>& net() const { return net_; }
  int action_dim() const { return spec_.action_dim; }
  ParamSet<Scalar>& params() { return params_; }
  const ParamSet<Scalar>& params() const { return params_; }
  void set_params(ParamSet<Scalar> p) {
    p.require_same_layout(net_.layout(), "Student::set_params");
    params_ = std::move(p);
  }

  Matrix stop_cond(const Row& s) const {
    Matrix c = Matrix::Zero(spec_.time_embed + 1, s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      if (s(j) > Scalar(0)) {
        const Row one = Row::Constant(1, s(j));
        embedding_.embed(one, c.block(0, j, spec_.time_embed, 1));
      } else {
        c(spec_.time_embed, j) = Scalar(1);
      }
    }
    return c;
  }

  Matrix main_cond(const Matrix& obs, const Row& t) const {
    if (obs.rows() != spec_.obs_dim || obs.cols() != t.size())
      throw DimensionError("Student: observation 'o' is " +
                           shape_str(obs.rows(), obs.cols()) + ", expected " +
                           shape_str(spec_.obs_dim, t.size()));
    Matrix c(spec_.obs_dim + spec_.time_embed, t.size());
    c.topRows(spec_.obs_dim) = obs;
    embedding_.embed(t, c.bottomRows(spec_.time_embed));
    return c;
  }

  Matrix jump(const ParamSet<Scalar>& p, const Matrix& x, const Row& t,
              const Row& s, const Matrix& obs, Mode mode = Mode::eval,
              Rng* rng = nullptr, Cache* cache = nullptr) const {
    if (x.cols() != t.size() || x.cols() != s.size())
      throw DimensionError("Student::jump: x has " + std::to_string(x.cols()) +
                           " columns, t " + std::to_string(t.size()) + ", s " +
                           std::to_string(s.size()));
    Row skip(t.size()), out(t.size()), in(t.size()), ratio(t.size());
    const Scalar sd = schedule_.sigma_data();
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      if (!(t(j) > Scalar(0)))
        throw Error("Student::jump: start time must be > 0");
      if (s(j) < Scalar(0) || s(j) > t(j))
        throw Error("Student::jump: stop time " +
                    std::to_string(static_cast<double>(s(j))) +
                    " outside [0, t=" + std::to_string(static_cast<double>(t(j))) +
                    "]");
      const auto c = edm_precond(t(j), sd);
      skip(j) = c.skip;
      out(j) = c.out;
      in(j) = c.in;
      ratio(j) = s(j) / t(j);
    }
    const std::array<Matrix, 2> cond = {main_cond(obs, t), stop_cond(s)};
    const Matrix net_in = network_input(spec_, x, in, obs);
    const Matrix f = net_.forward(p, net_in, cond, mode, rng,
                                  cache ? &cache->net : nullptr);
    // Same expression as Teacher::denoise so a warm-started student at s = 0
    // reproduces the teacher bit for bit.
    const Matrix g = x * skip.asDiagonal() + f * out.asDiagonal();
    if (cache) {
      cache->skip = skip;
      cache->out = out;
      cache->in = in;
      cache->ratio = ratio;
    }
    const Row keep = Row::Ones(t.size()) - ratio;
    return x * ratio.asDiagonal() + g * keep.asDiagonal();
  }

  Matrix jump(const Matrix& x, const Row& t, const Row& s,
              const Matrix& obs) const {
    return jump(params_, x, t, s, obs);
  }

  // Mesh-index form. Index -1 for s denotes time 0.
  Matrix jump_index(const ParamSet<Scalar>& p, const Matrix& x, int t_idx,
                    int s_idx, const Matrix& obs, Mode mode = Mode::eval,
                    Rng* rng = nullptr) const {
    if (s_idx > t_idx)
      throw Error("student_jump: stop index " + std::to_string(s_idx) +
                  " exceeds start index " + std::to_string(t_idx));
    const Row t = Row::Constant(x.cols(), schedule_.time(t_idx));
    const Row s = Row::Constant(
        x.cols(), s_idx < 0 ? Scalar(0) : schedule_.time(s_idx));
    return jump(p, x, t, s, obs, mode, rng);
  }

  // dL/dx given dL/dg; parameter gradients accumulate into *grads.
  Matrix backward(const ParamSet<Scalar>& p, const Cache& cache,
                  const Matrix& d_out, ParamSet<Scalar>* grads) const {
    const Row keep = Row::Ones(cache.ratio.size()) - cache.ratio;
    const Matrix dg = d_out * keep.asDiagonal();
    const Matrix df = dg * cache.out.asDiagonal();
    const Matrix d_in = net_.backward(p, cache.net, df, grads);
    return d_out * cache.ratio.asDiagonal() + dg * cache.skip.asDiagonal() +
           d_in.topRows(spec_.action_dim) * cache.in.asDiagonal();
  }

 private:
  NetSpec spec_;
  NoiseSchedule<Scalar> schedule_;
  CondMlp<Scalar> net_;
  TimeEmbedding<Scalar> embedding_;
  ParamSet<Scalar> params_;
};

// Student initialized from teacher weights. Shared tensors are copied
// bitwise, the stop branch's FiLM layers are zeroed and its embedding layer
// is freshly initialized. `student_spec` defaults to the teacher's.
template <typename Scalar>
Student<Scalar> warm_start(const Teacher<Scalar>& teacher, Rng& rng,
                           std::optional<NetSpec> student_spec = std::nullopt) {
  NetSpec spec = student_spec.value_or(teacher.spec());
  Student<Scalar> student(spec, teacher.schedule().params());
  student.init(rng);
  ParamSet<Scalar> p = student.params();
  for (const auto& [name, tensor] : teacher.params()) {
    if (!p.contains(name))
      throw DimensionError("warm_start: student has no tensor '" + name + "'");
    auto& dst = p[name];
    if (dst.rows() != tensor.value.rows() || dst.cols() != tensor.value.cols())
      throw DimensionError("warm_start: tensor '" + name + "' is " +
                           shape_str(tensor.value.rows(), tensor.value.cols()) +
                           " in the teacher but " +
                           shape_str(dst.rows(), dst.cols()) + " in the student");
    dst = tensor.value;
  }
  student.net().zero_branch_film(p, kStopBranch);
  student.set_params(std::move(p));
  return student;
}

}  // namespace cpd

#endif  // CPD_DISTILLATION_STUDENT_HPP_
