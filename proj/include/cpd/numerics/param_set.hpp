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

#ifndef CPD_NUMERICS_PARAM_SET_HPP_
#define CPD_NUMERICS_PARAM_SET_HPP_

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "cpd/numerics/types.hpp"

namespace cpd {

// Named dense tensors. Vectors are stored as n x 1 matrices with rank 1.
// Iteration order is lexicographic by name, which keeps serialization and
// optimizer updates deterministic.
template <typename Scalar>
class ParamSet {
 public:
  struct Tensor {
    MatrixX<Scalar> value;
    int rank = 2;
  };
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, MatrixX<Scalar> value, int rank = 2) {
    if (tensors_.count(name)) throw Error("duplicate parameter '" + name + "'");
    if (rank == 1 && value.cols() != 1)
      throw DimensionError("rank-1 parameter '" + name + "' must be a column");
    tensors_.emplace(name, Tensor{std::move(value), rank});
  }

  bool contains(const std::string& name) const {
    return tensors_.count(name) != 0;
  }

  MatrixX<Scalar>& operator[](const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      throw Error("missing parameter '" + name + "'");
    return it->second.value;
  }

  const MatrixX<Scalar>& operator[](const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      throw Error("missing parameter '" + name + "'");
    return it->second.value;
  }

  int rank(const std::string& name) const { return tensors_.at(name).rank; }

  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }

  Eigen::Index num_scalars() const {
    Eigen::Index n = 0;
    for (const auto& [_, t] : tensors_) n += t.value.size();
    return n;
  }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  ParamSet zeros_like() const {
    ParamSet z;
    for (const auto& [name, t] : tensors_)
      z.add(name, MatrixX<Scalar>::Zero(t.value.rows(), t.value.cols()),
            t.rank);
    return z;
  }

  void set_zero() {
    for (auto& [_, t] : tensors_) t.value.setZero();
  }

  template <typename To>
  ParamSet<To> cast() const {
    ParamSet<To> out;
    for (const auto& [name, t] : tensors_)
      out.add(name, t.value.template cast<To>(), t.rank);
    return out;
  }

  // Empty string when the layouts match, otherwise the first offending name.
  std::string layout_mismatch(const ParamSet& other) const {
    for (const auto& [name, t] : tensors_) {
      auto it = other.tensors_.find(name);
      if (it == other.tensors_.end()) return name;
      if (it->second.value.rows() != t.value.rows() ||
          it->second.value.cols() != t.value.cols())
        return name;
    }
    for (const auto& [name, _] : other.tensors_)
      if (!tensors_.count(name)) return name;
    return {};
  }

  void require_same_layout(const ParamSet& other, const char* what) const {
    const std::string bad = layout_mismatch(other);
    if (!bad.empty())
      throw DimensionError(std::string(what) + ": layout mismatch at '" + bad +
                           "'");
  }

  ParamSet& operator+=(const ParamSet& other) {
    require_same_layout(other, "ParamSet +=");
    for (auto& [name, t] : tensors_) t.value += other.tensors_.at(name).value;
    return *this;
  }

  ParamSet& operator*=(Scalar s) {
    for (auto& [_, t] : tensors_) t.value *= s;
    return *this;
  }

  // this += s * other
  void add_scaled(const ParamSet& other, Scalar s) {
    require_same_layout(other, "ParamSet add_scaled");
    for (auto& [name, t] : tensors_)
      t.value += s * other.tensors_.at(name).value;
  }

  double squared_norm() const {
    double acc = 0;
    for (const auto& [_, t] : tensors_)
      acc += t.value.template cast<double>().squaredNorm();
    return acc;
  }

  // Name of the first tensor holding a NaN/Inf, or empty.
  std::string first_non_finite() const {
    for (const auto& [name, t] : tensors_)
      if (!t.value.allFinite()) return name;
    return {};
  }

  bool operator==(const ParamSet& other) const {
    if (!layout_mismatch(other).empty()) return false;
    for (const auto& [name, t] : tensors_)
      if (t.value != other.tensors_.at(name).value) return false;
    return true;
  }

 private:
  Map tensors_;
};

// Throws NumericalError naming the first non-finite gradient tensor.
template <typename Scalar>
void require_finite(const ParamSet<Scalar>& grads, const std::string& where) {
  const std::string bad = grads.first_non_finite();
  if (!bad.empty())
    throw NumericalError(where + ": non-finite gradient in '" + bad + "'");
}

}  // namespace cpd

#endif  // CPD_NUMERICS_PARAM_SET_HPP_
