// Copyright (c) 2026 eendss contributors
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

#ifndef EENDSS_OPTIM_HPP_
#define EENDSS_OPTIM_HPP_

#include <cmath>
#include <vector>

#include "eendss/tensor.hpp"

namespace eendss {

// Adam with bias correction. Moment buffers are shape-congruent with their
// parameters; steps with any non-finite gradient are skipped and counted.
template <class T>
class AdamT {
 public:
  AdamT(std::vector<TensorT<T>> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
        T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      if (!p.requires_grad()) throw ValueError("adam: parameter without gradient buffer");
      m_.emplace_back(p.numel(), T(0));
      v_.emplace_back(p.numel(), T(0));
    }
  }

  // Returns false (and increments skipped_steps) when a non-finite gradient
  // was seen; parameters are untouched in that case.
  bool step() {
    for (auto& p : params_)
      for (T g : p.grad())
        if (!std::isfinite(g)) {
          ++skipped_;
          return false;
        }
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& val = params_[i].value();
      const auto& grad = params_[i].grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < val.size(); ++j) {
        const T g = grad[j];
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g;
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g * g;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        val[j] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
    return true;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // Global-norm gradient clipping; returns the pre-clip norm.
  double clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (auto& p : params_)
      for (T g : p.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
      const T s = static_cast<T>(max_norm / norm);
      for (auto& p : params_)
        for (T& g : p.grad()) g *= s;
    }
    return norm;
  }

  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }
  int64_t step_count() const { return t_; }
  int64_t skipped_steps() const { return skipped_; }
  std::vector<TensorT<T>>& params() { return params_; }

 private:
  std::vector<TensorT<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  int64_t skipped_ = 0;
};

using Adam = AdamT<float>;

}  // namespace eendss

#endif  // EENDSS_OPTIM_HPP_
