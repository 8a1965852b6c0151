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

#ifndef CPD_DIFFUSION_SOLVER_HPP_
#define CPD_DIFFUSION_SOLVER_HPP_

#include <span>
#include <string>
#include <vector>

#include "cpd/diffusion/schedule.hpp"

namespace cpd {

// A denoiser is any callable  MatrixX(const MatrixX& x, const RowVectorX& t)
// returning the x0 estimate for each column of x at the matching time.
//
// Probability-flow direction:  dx/dt = (x - D(x, t)) / t.  Integrating from
// T toward 0 moves x onto the data manifold.
template <typename Scalar, typename Denoiser>
MatrixX<Scalar> pfode_derivative(const Denoiser& denoise,
                                 const MatrixX<Scalar>& x,
                                 const RowVectorX<Scalar>& t) {
  for (Eigen::Index j = 0; j < t.size(); ++j)
    if (!(t(j) > Scalar(0)))
      throw Error("pfode_derivative: t must be > 0");
  const MatrixX<Scalar> d = denoise(x, t);
  return (x - d) * t.cwiseInverse().asDiagonal();
}

// One Heun (explicit trapezoidal) step per column from t_cur to t_next.
// Two denoiser evaluations, or one when `euler` is set.
template <typename Scalar, typename Denoiser>
MatrixX<Scalar> heun_step(const Denoiser& denoise, const MatrixX<Scalar>& x,
                          const RowVectorX<Scalar>& t_cur,
                          const RowVectorX<Scalar>& t_next, bool euler = false) {
  if (t_cur.size() != x.cols() || t_next.size() != x.cols())
    throw DimensionError("heun_step: time rows must match the batch width");
  const RowVectorX<Scalar> dt = t_next - t_cur;
  const MatrixX<Scalar> d1 = pfode_derivative<Scalar>(denoise, x, t_cur);
  MatrixX<Scalar> x_euler = x + d1 * dt.asDiagonal();
  if (!x_euler.allFinite())
    throw NumericalError("heun_step: non-finite predictor");
  if (euler) return x_euler;
  const MatrixX<Scalar> d2 = pfode_derivative<Scalar>(denoise, x_euler, t_next);
  MatrixX<Scalar> out = x + (Scalar(0.5) * (d1 + d2)) * dt.asDiagonal();
  if (!out.allFinite()) throw NumericalError("heun_step: non-finite corrector");
  return out;
}

template <typename Scalar, typename Denoiser>
MatrixX<Scalar> heun_step(const Denoiser& denoise, const MatrixX<Scalar>& x,
                          Scalar t_cur, Scalar t_next, bool euler = false) {
  if (!(t_next < t_cur))
    throw Error("heun_step: t_next must be below t_cur");
  const RowVectorX<Scalar> a = RowVectorX<Scalar>::Constant(x.cols(), t_cur);
  const RowVectorX<Scalar> b = RowVectorX<Scalar>::Constant(x.cols(), t_next);
  return heun_step<Scalar>(denoise, x, a, b, euler);
}

struct SolveOptions {
  // Take the last segment with a single Euler evaluation.
  bool euler_last = false;
};

template <typename Scalar>
struct SolveResult {
  MatrixX<Scalar> x;
  int nfe = 0;
};

// Integrates through strictly decreasing times. NFE counts denoiser calls
// per generated sample: 2 per segment, minus 1 for an Euler final segment.
template <typename Scalar, typename Denoiser>
SolveResult<Scalar> solve_times(const Denoiser& denoise, MatrixX<Scalar> x,
                                std::span<const Scalar> times,
                                SolveOptions opts = {}) {
  if (times.size() < 2) throw Error("solve: need at least two times");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] < times[i - 1]))
      throw Error("solve: times must strictly decrease");
  SolveResult<Scalar> r;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const bool euler = opts.euler_last && i + 2 == times.size();
    x = heun_step<Scalar>(denoise, x, times[i], times[i + 1], euler);
    r.nfe += euler ? 1 : 2;
  }
  r.x = std::move(x);
  return r;
}

// Same, over strictly decreasing mesh indices.
template <typename Scalar, typename Denoiser>
SolveResult<Scalar> solve(const Denoiser& denoise,
                          const NoiseSchedule<Scalar>& schedule,
                          MatrixX<Scalar> x, std::span<const int> indices,
                          SolveOptions opts = {}) {
  std::vector<Scalar> times;
  times.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0 && !(indices[i] < indices[i - 1]))
      throw Error("solve: step indices must strictly decrease");
    times.push_back(schedule.time(indices[i]));
  }
  return solve_times<Scalar>(denoise, std::move(x), std::span<const Scalar>(times),
                             opts);
}

// Mesh indices N-1, N-2, ..., 0.
inline std::vector<int> full_mesh_indices(int size) {
  std::vector<int> idx(size);
  for (int i = 0; i < size; ++i) idx[i] = size - 1 - i;
  return idx;
}

}  // namespace cpd

#endif  // CPD_DIFFUSION_SOLVER_HPP_
