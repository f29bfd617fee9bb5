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
//
// Test-only finite-difference oracle. Runs the double instantiation of the
// ops so fp32 roundoff cannot swamp the 1e-4 relative tolerance; the float
// instantiation shares the same code paths by template.

#ifndef EENDSS_TESTS_FD_CHECK_HPP_
#define EENDSS_TESTS_FD_CHECK_HPP_

#include <functional>
#include <vector>

#include "eendss/eendss.hpp"

namespace eendss::testutil {

using DTensor = TensorT<double>;

inline DTensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(static_cast<size_t>(numel_of(shape)));
  for (auto& x : v) x = d(rng);
  return DTensor::from_vec(std::move(shape), std::move(v));
}

struct FdReport {
  double max_rel = 0.0;
  int64_t checked = 0;
};

// Scalarizes the op output with fixed random weights, backprops the
// analytic gradient, then central-differences every input element. The
// denominator floor keeps FD truncation noise from dominating elements
// whose true gradient is accidentally near zero.
inline constexpr double kFdDenomFloor = 1e-2;

inline FdReport fd_check(std::vector<DTensor> inputs,
                         const std::function<DTensor(const std::vector<DTensor>&)>& f,
                         uint64_t weight_seed, double h = 1e-4) {
  for (auto& in : inputs) in.set_requires_grad(true);
  auto out = f(inputs);
  Rng wrng(weight_seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  std::vector<double> w(static_cast<size_t>(out.numel()));
  for (auto& v : w) v = ud(wrng);
  auto root = sum_all(mul(out, DTensor::from_vec(out.shape(), w)));
  TapeT<double>::active().backward(root);
  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) analytic.push_back(in.grad());

  NoGradT<double> guard;
  auto eval = [&]() {
    auto o = f(inputs);
    double acc = 0.0;
    for (int64_t i = 0; i < o.numel(); ++i)
      acc += o.value()[static_cast<size_t>(i)] * w[static_cast<size_t>(i)];
    return acc;
  };
  FdReport rep;
  for (size_t ii = 0; ii < inputs.size(); ++ii) {
    auto& vals = inputs[ii].value();
    for (size_t j = 0; j < vals.size(); ++j) {
      const double orig = vals[j];
      vals[j] = orig + h;
      const double fp = eval();
      vals[j] = orig - h;
      const double fm = eval();
      vals[j] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double g = analytic[ii][j];
      const double denom = std::max({std::abs(fd), std::abs(g), kFdDenomFloor});
      rep.max_rel = std::max(rep.max_rel, std::abs(fd - g) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace eendss::testutil

#endif  // EENDSS_TESTS_FD_CHECK_HPP_
