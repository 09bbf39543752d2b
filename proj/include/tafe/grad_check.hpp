// Copyright 2026 The tafenet Authors.
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

#ifndef TAFE_GRAD_CHECK_HPP
#define TAFE_GRAD_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tafe/graph.hpp"
#include "tafe/tensor.hpp"

namespace tafe {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients against central finite differences,
/// coordinate by coordinate, in 64-bit precision.
///
/// `build` receives a graph and one parameter Var per entry of `params`
/// and must return a scalar Var. Relative error per coordinate is
/// |a - n| / max(1, |a|, |n|).
template <typename BuildFn>
GradCheckReport grad_check(BuildFn build, std::vector<Tensor<double>> params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  auto evaluate = [&](const std::vector<Tensor<double>>& theta) {
    Graph<double> g;
    std::vector<typename Graph<double>::Var> vars;
    vars.reserve(theta.size());
    for (const Tensor<double>& t : theta) vars.push_back(g.param(t));
    typename Graph<double>::Var root = build(g, vars);
    const Tensor<double>& v = g.value(root);
    if (v.size() != 1)
      throw std::invalid_argument("grad_check: objective must be scalar, got shape " +
                                  shape_str(v.shape()));
    return v[0];
  };

  // Analytic pass.
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    std::vector<typename Graph<double>::Var> vars;
    vars.reserve(params.size());
    for (const Tensor<double>& t : params) vars.push_back(g.param(t));
    typename Graph<double>::Var root = build(g, vars);
    if (g.value(root).size() != 1)
      throw std::invalid_argument("grad_check: objective must be scalar, got shape " +
                                  shape_str(g.value(root).shape()));
    g.backward(root);
    analytic.reserve(vars.size());
    for (auto v : vars) analytic.push_back(g.grad(v));
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t c = 0; c < params[p].size(); ++c) {
      const double saved = params[p][c];
      params[p][c] = saved + step;
      const double fp = evaluate(params);
      params[p][c] = saved - step;
      const double fm = evaluate(params);
      params[p][c] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite objective at probe (param " +
                                 std::to_string(p) + ", coord " + std::to_string(c) + ")");
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[p][c];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p;
        report.worst_coord = c;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace tafe

#endif  // TAFE_GRAD_CHECK_HPP
