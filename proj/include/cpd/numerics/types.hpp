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

#ifndef CPD_NUMERICS_TYPES_HPP_
#define CPD_NUMERICS_TYPES_HPP_

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cpd {

// Column-major dense types. Batched quantities store one sample per column.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXf = MatrixX<float>;
using VectorXf = VectorX<float>;
using RowVectorXf = RowVectorX<float>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of inputs or parameters disagree with the architecture.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in a loss, gradient or intermediate value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or corrupted file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace cpd

#endif  // CPD_NUMERICS_TYPES_HPP_
