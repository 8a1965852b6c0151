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

#ifndef CPD_DIFFUSION_SCHEDULE_HPP_
#define CPD_DIFFUSION_SCHEDULE_HPP_

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cpd/numerics/types.hpp"

namespace cpd {

// Smallest admissible mesh time; requested t_min values in [0, floor) are
// clamped up to it.
inline constexpr double kScheduleFloor = 1e-5;

struct ScheduleParams {
  double t_min = 0.002;
  double t_max = 80.0;
  double rho = 7.0;
  int size = 40;
  double sigma_data = 0.5;

  bool operator==(const ScheduleParams&) const = default;
};

inline void validate(const ScheduleParams& p) {
  if (p.size < 2)
    throw ConfigError("schedule size N must be >= 2, got " +
                      std::to_string(p.size));
  if (!(p.t_min >= 0.0))
    throw ConfigError("schedule t_min must be >= 0");
  if (!(std::max(p.t_min, kScheduleFloor) < p.t_max))
    throw ConfigError("schedule needs t_min < T, got t_min=" +
                      std::to_string(p.t_min) + " T=" + std::to_string(p.t_max));
  if (!(p.rho > 0.0)) throw ConfigError("schedule rho must be positive");
  if (!(p.sigma_data > 0.0)) throw ConfigError("sigma_data must be positive");
}

// times(i) = (t_min^(1/rho) + i/(N-1) (T^(1/rho) - t_min^(1/rho)))^rho,
// evaluated in double. The endpoints are assigned exactly.
inline std::vector<double> mesh(const ScheduleParams& p) {
  validate(p);
  const double lo = std::max(p.t_min, kScheduleFloor);
  const double a = std::pow(lo, 1.0 / p.rho);
  const double b = std::pow(p.t_max, 1.0 / p.rho);
  std::vector<double> t(p.size);
  const double last = static_cast<double>(p.size - 1);
  for (int i = 0; i < p.size; ++i)
    t[i] = std::pow(a + (static_cast<double>(i) / last) * (b - a), p.rho);
  t.front() = lo;
  t.back() = p.t_max;
  return t;
}

template <typename Scalar>
class NoiseSchedule {
 public:
  NoiseSchedule() : NoiseSchedule(ScheduleParams{}) {}

  explicit NoiseSchedule(const ScheduleParams& p) : params_(p) {
    const auto t = mesh(p);
    times_.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      times_[i] = static_cast<Scalar>(t[i]);
      if (i > 0 && !(times_[i] > times_[i - 1]))
        throw ConfigError("schedule mesh is not strictly increasing at index " +
                          std::to_string(i) + " in this precision");
    }
  }

  const ScheduleParams& params() const { return params_; }
  int size() const { return static_cast<int>(times_.size()); }
  Scalar time(int i) const { return times_.at(static_cast<std::size_t>(i)); }
  std::span<const Scalar> times() const { return times_; }
  Scalar t_min() const { return times_.front(); }
  Scalar t_max() const { return times_.back(); }
  Scalar sigma_data() const { return static_cast<Scalar>(params_.sigma_data); }

  // Index of the mesh time nearest to t (ties go to the lower index).
  int nearest_index(double t) const {
    int best = 0;
    double best_d = std::abs(static_cast<double>(times_[0]) - t);
    for (int i = 1; i < size(); ++i) {
      const double d = std::abs(static_cast<double>(times_[i]) - t);
      if (d < best_d) {
        best = i;
        best_d = d;
      }
    }
    return best;
  }

  RowVectorX<Scalar> times_at(std::span<const int> idx) const {
    RowVectorX<Scalar> r(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) r(j) = time(idx[j]);
    return r;
  }

 private:
  ScheduleParams params_;
  std::vector<Scalar> times_;
};

// EDM preconditioning coefficients at noise level t.
template <typename Scalar>
struct Precond {
  Scalar skip;
  Scalar out;
  Scalar in;
};

template <typename Scalar>
Precond<Scalar> edm_precond(Scalar t, Scalar sigma_data) {
  const Scalar sd2 = sigma_data * sigma_data;
  const Scalar denom = t * t + sd2;
  const Scalar root = std::sqrt(denom);
  return {sd2 / denom, t * sigma_data / root, Scalar(1) / root};
}

// x_t = x0 + t * eps, one time per column.
template <typename Scalar>
MatrixX<Scalar> noise_sample(const MatrixX<Scalar>& x0,
                             const RowVectorX<Scalar>& t,
                             const MatrixX<Scalar>& eps) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols() || t.size() != x0.cols())
    throw DimensionError("noise_sample: x0 " + shape_str(x0.rows(), x0.cols()) +
                         ", eps " + shape_str(eps.rows(), eps.cols()) + ", t " +
                         std::to_string(t.size()));
  for (Eigen::Index j = 0; j < t.size(); ++j)
    if (t(j) < Scalar(0)) throw Error("noise_sample: negative time");
  return x0 + eps * t.asDiagonal();
}

}  // namespace cpd

#endif  // CPD_DIFFUSION_SCHEDULE_HPP_
