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

#ifndef CPD_NUMERICS_TIME_EMBEDDING_HPP_
#define CPD_NUMERICS_TIME_EMBEDDING_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "cpd/numerics/types.hpp"

namespace cpd {

// Sinusoidal features of the log noise level ln(t) / 4.
//
// The lowest frequency is 1, so (sin, cos) of the first pair is injective
// over any log-level interval shorter than 2*pi; ln(t)/4 spans about 2.65
// for t in [0.002, 80].
template <typename Scalar>
class TimeEmbedding {
 public:
  explicit TimeEmbedding(int width = 32, double max_frequency = 16.0)
      : width_(width) {
    if (width < 2 || width % 2 != 0)
      throw ConfigError("time embedding width must be even and >= 2, got " +
                        std::to_string(width));
    const int k = width / 2;
    freqs_.resize(k);
    for (int i = 0; i < k; ++i)
      freqs_[i] = k == 1 ? 1.0
                         : std::pow(max_frequency, static_cast<double>(i) /
                                                       static_cast<double>(k - 1));
  }

  int width() const { return width_; }

  static Scalar log_level(Scalar t) { return std::log(t) / Scalar(4); }

  // Writes the embedding of each entry of t into the columns of out.
  void embed(const RowVectorX<Scalar>& t, Eigen::Ref<MatrixX<Scalar>> out) const {
    const int k = width_ / 2;
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      if (!(t(j) > Scalar(0)))
        throw NumericalError("time embedding needs t > 0, got " +
                             std::to_string(static_cast<double>(t(j))));
      const Scalar c = log_level(t(j));
      for (int i = 0; i < k; ++i) {
        const Scalar arg = static_cast<Scalar>(freqs_[i]) * c;
        out(i, j) = std::sin(arg);
        out(k + i, j) = std::cos(arg);
      }
    }
  }

  MatrixX<Scalar> operator()(const RowVectorX<Scalar>& t) const {
    MatrixX<Scalar> out(width_, t.size());
    embed(t, out);
    return out;
  }

 private:
  int width_;
  std::vector<double> freqs_;
};

}  // namespace cpd

#endif  // CPD_NUMERICS_TIME_EMBEDDING_HPP_
