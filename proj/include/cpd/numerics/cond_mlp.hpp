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

#ifndef CPD_NUMERICS_COND_MLP_HPP_
#define CPD_NUMERICS_COND_MLP_HPP_

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpd/numerics/param_set.hpp"
#include "cpd/numerics/rng.hpp"
#include "cpd/numerics/types.hpp"

namespace cpd {

enum class Mode { train, eval };

// One conditioning pathway: cond -> silu(E cond + e) -> per-layer FiLM
// (scale, shift) contributions. Contributions of all branches are summed.
struct BranchSpec {
  std::string name;
  int input_dim = 0;
  int embed_dim = 0;

  bool operator==(const BranchSpec&) const = default;
};

struct MlpSpec {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<int> hidden;
  std::vector<BranchSpec> branches;
  double dropout = 0.0;

  bool operator==(const MlpSpec&) const = default;
};

namespace detail {

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& a) {
  using S = typename Derived::Scalar;
  return S(1) / (S(1) + (-a).exp());
}

}  // namespace detail

// Multilayer perceptron whose hidden layers are modulated feature-wise by
// conditioning vectors:
//
//   a_l  = W_l h_{l-1} + b_l
//   a'_l = a_l * (1 + gamma_l(c)) + beta_l(c)
//   h_l  = dropout(silu(a'_l))
//   y    = W_out h_L + b_out
//
// With every FiLM weight and bias of a branch at zero that branch adds
// exactly +0 to gamma and beta, so the function equals the network without
// it. Parameters live outside the network; all methods are const.
template <typename Scalar>
class CondMlp {
 public:
  using Matrix = MatrixX<Scalar>;

  struct Cache {
    Matrix x;
    std::vector<Matrix> cond;
    std::vector<Matrix> embed_pre;  // per branch
    std::vector<Matrix> embed;      // per branch
    std::vector<Matrix> h_in;       // per layer
    std::vector<Matrix> pre;        // W h + b
    std::vector<Matrix> gamma;      // summed over branches
    std::vector<Matrix> mod;        // pre * (1 + gamma) + beta
    std::vector<Matrix> mask;       // empty when dropout is off
    Matrix h_last;
  };

  CondMlp() = default;

  explicit CondMlp(MlpSpec spec) : spec_(std::move(spec)) {
    if (spec_.input_dim < 0 || spec_.output_dim <= 0)
      throw ConfigError("CondMlp: input_dim must be >= 0 and output_dim > 0");
    for (int h : spec_.hidden)
      if (h <= 0) throw ConfigError("CondMlp: hidden widths must be positive");
    for (const auto& b : spec_.branches)
      if (b.input_dim <= 0 || b.embed_dim <= 0)
        throw ConfigError("CondMlp: branch '" + b.name +
                          "' needs positive input and embed dims");
    if (!(spec_.dropout >= 0.0 && spec_.dropout < 1.0))
      throw ConfigError("CondMlp: dropout must lie in [0, 1)");
  }

  const MlpSpec& spec() const { return spec_; }
  int num_layers() const { return static_cast<int>(spec_.hidden.size()); }

  int branch_index(const std::string& name) const {
    for (std::size_t i = 0; i < spec_.branches.size(); ++i)
      if (spec_.branches[i].name == name) return static_cast<int>(i);
    throw Error("CondMlp: no branch named '" + name + "'");
  }

  static std::string layer_weight(int l) {
    return "layer" + std::to_string(l) + ".weight";
  }
  static std::string layer_bias(int l) {
    return "layer" + std::to_string(l) + ".bias";
  }
  static std::string embed_weight(const std::string& b) {
    return b + ".embed.weight";
  }
  static std::string embed_bias(const std::string& b) {
    return b + ".embed.bias";
  }
  static std::string film_weight(const std::string& b, int l) {
    return b + ".film" + std::to_string(l) + ".weight";
  }
  static std::string film_bias(const std::string& b, int l) {
    return b + ".film" + std::to_string(l) + ".bias";
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  ParamSet<Scalar> init(Rng& rng) const {
    ParamSet<Scalar> p;
    auto dense = [&](const std::string& w, const std::string& b, int out,
                     int in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(in, 1)));
      p.add(w, rng.uniform_matrix<Scalar>(out, in, -bound, bound), 2);
      p.add(b, rng.uniform_matrix<Scalar>(out, 1, -bound, bound), 1);
    };
    int prev = spec_.input_dim;
    for (int l = 0; l < num_layers(); ++l) {
      dense(layer_weight(l), layer_bias(l), spec_.hidden[l], prev);
      prev = spec_.hidden[l];
    }
    dense("out.weight", "out.bias", spec_.output_dim, prev);
    for (const auto& br : spec_.branches) {
      dense(embed_weight(br.name), embed_bias(br.name), br.embed_dim,
            br.input_dim);
      for (int l = 0; l < num_layers(); ++l)
        dense(film_weight(br.name, l), film_bias(br.name, l),
              2 * spec_.hidden[l], br.embed_dim);
    }
    return p;
  }

  // All-zero parameter set with this architecture's names and shapes.
  ParamSet<Scalar> layout() const {
    Rng rng(0);
    ParamSet<Scalar> p = init(rng);
    p.set_zero();
    return p;
  }

  // Zeroes the FiLM weights and biases of one branch, leaving its embedding
  // layer intact so the branch can still receive gradient.
  void zero_branch_film(ParamSet<Scalar>& p, const std::string& branch) const {
    branch_index(branch);
    for (int l = 0; l < num_layers(); ++l) {
      p[film_weight(branch, l)].setZero();
      p[film_bias(branch, l)].setZero();
    }
  }

  Matrix forward(const ParamSet<Scalar>& p, const Matrix& x,
                 std::span<const Matrix> cond, Mode mode = Mode::eval,
                 Rng* rng = nullptr, Cache* cache = nullptr) const {
    check_inputs(x, cond);
    const Eigen::Index batch = x.cols();
    const bool drop = mode == Mode::train && spec_.dropout > 0.0;
    if (drop && rng == nullptr)
      throw Error("CondMlp: train-mode dropout needs an rng stream");

    const std::size_t nb = spec_.branches.size();
    std::vector<Matrix> embed(nb);
    std::vector<Matrix> embed_pre(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& name = spec_.branches[b].name;
      embed_pre[b] = p[embed_weight(name)] * cond[b];
      embed_pre[b].colwise() += p[embed_bias(name)].col(0);
      embed[b] = silu(embed_pre[b]);
    }
    if (cache) {
      cache->x = x;
      cache->cond.assign(cond.begin(), cond.end());
      cache->h_in.clear();
      cache->pre.clear();
      cache->gamma.clear();
      cache->mod.clear();
      cache->mask.clear();
    }

    Matrix h = x;
    const Scalar keep_scale =
        drop ? static_cast<Scalar>(1.0 / (1.0 - spec_.dropout)) : Scalar(1);
    for (int l = 0; l < num_layers(); ++l) {
      const Eigen::Index width = spec_.hidden[l];
      Matrix pre = p[layer_weight(l)] * h;
      pre.colwise() += p[layer_bias(l)].col(0);

      Matrix gamma = Matrix::Zero(width, batch);
      Matrix beta = Matrix::Zero(width, batch);
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& name = spec_.branches[b].name;
        Matrix m = p[film_weight(name, l)] * embed[b];
        m.colwise() += p[film_bias(name, l)].col(0);
        gamma += m.topRows(width);
        beta += m.bottomRows(width);
      }
      Matrix mod = (pre.array() * (Scalar(1) + gamma.array()) + beta.array())
                       .matrix();
      Matrix out = silu(mod);
      Matrix mask;
      if (drop) {
        mask.resize(width, batch);
        for (Eigen::Index j = 0; j < batch; ++j)
          for (Eigen::Index i = 0; i < width; ++i)
            mask(i, j) = rng->bernoulli(spec_.dropout) ? Scalar(0) : keep_scale;
        out.array() *= mask.array();
      }
      if (cache) {
        cache->h_in.push_back(std::move(h));
        cache->pre.push_back(std::move(pre));
        cache->gamma.push_back(std::move(gamma));
        cache->mod.push_back(std::move(mod));
        cache->mask.push_back(std::move(mask));
      }
      h = std::move(out);
    }
    Matrix y = p["out.weight"] * h;
    y.colwise() += p["out.bias"].col(0);
    if (cache) {
      cache->h_last = std::move(h);
      cache->embed_pre = std::move(embed_pre);
      cache->embed = std::move(embed);
    }
    return y;
  }

  // Reverse pass. Accumulates parameter gradients into *grads when non-null
  // and returns dL/dx. Conditioning inputs are treated as constants.
  Matrix backward(const ParamSet<Scalar>& p, const Cache& cache,
                  const Matrix& dy, ParamSet<Scalar>* grads) const {
    if (dy.rows() != spec_.output_dim || dy.cols() != cache.x.cols())
      throw DimensionError("CondMlp::backward: dy is " +
                           shape_str(dy.rows(), dy.cols()) + ", expected " +
                           shape_str(spec_.output_dim, cache.x.cols()));
    const std::size_t nb = spec_.branches.size();
    std::vector<Matrix> d_embed(nb);
    if (grads) {
      (*grads)["out.weight"].noalias() += dy * cache.h_last.transpose();
      (*grads)["out.bias"] += dy.rowwise().sum();
      for (std::size_t b = 0; b < nb; ++b)
        d_embed[b] = Matrix::Zero(cache.embed[b].rows(), cache.embed[b].cols());
    }
    Matrix dh = p["out.weight"].transpose() * dy;
    for (int l = num_layers() - 1; l >= 0; --l) {
      const Eigen::Index width = spec_.hidden[l];
      if (cache.mask[l].size() > 0) dh.array() *= cache.mask[l].array();
      Matrix dmod = (dh.array() * silu_grad(cache.mod[l]).array()).matrix();
      Matrix dpre = (dmod.array() * (Scalar(1) + cache.gamma[l].array())).matrix();
      if (grads) {
        Matrix dm(2 * width, dmod.cols());
        dm.topRows(width) = (dmod.array() * cache.pre[l].array()).matrix();
        dm.bottomRows(width) = dmod;
        for (std::size_t b = 0; b < nb; ++b) {
          const auto& name = spec_.branches[b].name;
          (*grads)[film_weight(name, l)].noalias() +=
              dm * cache.embed[b].transpose();
          (*grads)[film_bias(name, l)] += dm.rowwise().sum();
          d_embed[b].noalias() += p[film_weight(name, l)].transpose() * dm;
        }
        (*grads)[layer_weight(l)].noalias() += dpre * cache.h_in[l].transpose();
        (*grads)[layer_bias(l)] += dpre.rowwise().sum();
      }
      dh = p[layer_weight(l)].transpose() * dpre;
    }
    if (grads) {
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& name = spec_.branches[b].name;
        Matrix dpre_e =
            (d_embed[b].array() * silu_grad(cache.embed_pre[b]).array()).matrix();
        (*grads)[embed_weight(name)].noalias() += dpre_e * cache.cond[b].transpose();
        (*grads)[embed_bias(name)] += dpre_e.rowwise().sum();
      }
    }
    return dh;
  }

  static Matrix silu(const Matrix& a) {
    return (a.array() * detail::sigmoid(a.array())).matrix();
  }

  static Matrix silu_grad(const Matrix& a) {
    const auto s = detail::sigmoid(a.array()).eval();
    return (s * (Scalar(1) + a.array() * (Scalar(1) - s))).matrix();
  }

 private:
  void check_inputs(const Matrix& x, std::span<const Matrix> cond) const {
    if (x.rows() != spec_.input_dim)
      throw DimensionError("CondMlp: input 'x' has " + std::to_string(x.rows()) +
                           " rows, expected " + std::to_string(spec_.input_dim));
    if (cond.size() != spec_.branches.size())
      throw DimensionError("CondMlp: got " + std::to_string(cond.size()) +
                           " conditioning inputs, expected " +
                           std::to_string(spec_.branches.size()));
    for (std::size_t b = 0; b < cond.size(); ++b) {
      const auto& br = spec_.branches[b];
      if (cond[b].rows() != br.input_dim || cond[b].cols() != x.cols())
        throw DimensionError("CondMlp: conditioning '" + br.name + "' is " +
                             shape_str(cond[b].rows(), cond[b].cols()) +
                             ", expected " + shape_str(br.input_dim, x.cols()));
    }
  }

  MlpSpec spec_;
};

}  // namespace cpd

#endif  // CPD_NUMERICS_COND_MLP_HPP_
