// Copyright 2026 The SCR Authors
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

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "scr/common.hpp"
#include "scr/mdp.hpp"
#include "scr/transport.hpp"

namespace scr {

/// Fixed point of a behavioral-metric operator on the state pairs of a tabular MDP.
struct MetricTable {
  Matrix values;                  // [state][state]
  std::size_t iterations = 0;     // operator applications performed
  double residual = 0.0;          // sup-norm change of the last application
  std::vector<double> residuals;  // sup-norm change of every application, in order
};

/// The iteration budget ran out before the residual reached the tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, MetricTable last) : Error(what), last_(std::move(last)) {}
  const MetricTable& last_iterate() const { return last_; }

 private:
  MetricTable last_;
};

inline constexpr double kDefaultMetricTol = 1e-10;

/// ceil(log(tol (1 - gamma) / R) / log(gamma)) + 8, where R is the spread of r^pi.
/// Contraction from the zero table bounds the t-th change by gamma^(t-1) R.
inline std::size_t default_max_iter(double gamma, double tol, double reward_range) {
  if (gamma <= 0.0 || reward_range <= 0.0) return 8;
  const double ratio = std::log(tol * (1.0 - gamma) / reward_range) / std::log(gamma);
  return static_cast<std::size_t>(std::max(0.0, std::ceil(ratio))) + 8;
}

inline double reward_range(const std::vector<double>& r) {
  if (r.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  return *hi - *lo;
}

/// |r^pi_x - r^pi_y| for all pairs.
inline Matrix reward_gap(const std::vector<double>& r) {
  const std::size_t n = r.size();
  Matrix d(n, n);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y) d(x, y) = std::abs(r[x] - r[y]);
  return d;
}

/// P d P^T, the expected distance between independent successors of every state pair.
inline Matrix independent_coupling(const Matrix& p, const Matrix& d) {
  const std::size_t n = p.rows;
  Matrix pd(n, n, 0.0), out(n, n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t a = 0; a < n; ++a) {
      const double w = p(x, a);
      if (w == 0.0) continue;
      for (std::size_t b = 0; b < n; ++b) pd(x, b) += w * d(a, b);
    }
  }
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) s += pd(x, b) * p(y, b);
      out(x, y) = s;
    }
  }
  return out;
}

/// One application of the MICo operator: |r_x - r_y| + gamma E_{x'~P_x, y'~P_y} d(x', y').
inline Matrix mico_operator(const Matrix& gap, const Matrix& p, double gamma, const Matrix& d) {
  Matrix out = independent_coupling(p, d);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = gap.data[i] + gamma * out.data[i];
  return out;
}

/// One application of the pi-bisimulation operator: |r_x - r_y| + gamma W(d)(P_x, P_y).
inline Matrix bisim_operator(const Matrix& gap, const Matrix& p, double gamma, const Matrix& d) {
  const std::size_t n = p.rows;
  Matrix out(n, n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    const std::span<const double> px(p.data.data() + x * n, n);
    for (std::size_t y = x; y < n; ++y) {
      const std::span<const double> py(p.data.data() + y * n, n);
      const double w = gamma == 0.0 ? 0.0 : wasserstein1(px, py, d).value;
      out(x, y) = out(y, x) = gap(x, y) + gamma * w;
    }
  }
  return out;
}

namespace detail {
template <typename Operator>
MetricTable iterate_to_fixed_point(const char* name, std::size_t n, double tol, std::size_t max_iter, Operator op) {
  if (!(tol > 0.0)) throw ValidationError(std::string(name) + ": tol must be positive");
  MetricTable t;
  t.values = Matrix(n, n, 0.0);
  while (t.iterations < max_iter) {
    Matrix next = op(t.values);
    t.residual = sup_norm_diff(next, t.values);
    t.residuals.push_back(t.residual);
    t.values = std::move(next);
    ++t.iterations;
    if (t.residual <= tol) return t;
  }
  throw ConvergenceError(std::string(name) + ": no convergence within " + std::to_string(max_iter) +
                             " iterations (residual " + std::to_string(t.residual) + ")",
                         std::move(t));
}
}  // namespace detail

/// pi-bisimulation metric by iterating from the zero table (its least fixed point).
/// max_iter == 0 selects default_max_iter.
inline MetricTable bisim_fixed_point(const TabularMdp& mdp, const Policy& pi, double tol = kDefaultMetricTol,
                                     std::size_t max_iter = 0) {
  validate(mdp);
  validate(pi, mdp.n_states, mdp.n_actions);
  const auto r = policy_reward(mdp, pi);
  const Matrix p = policy_transition(mdp, pi);
  const Matrix gap = reward_gap(r);
  if (max_iter == 0) max_iter = default_max_iter(mdp.gamma, tol, reward_range(r));
  return detail::iterate_to_fixed_point("bisim_fixed_point", mdp.n_states, tol, max_iter,
                                        [&](const Matrix& d) { return bisim_operator(gap, p, mdp.gamma, d); });
}

/// MICo distance with the exact expectation over independent successors.
inline MetricTable mico_fixed_point(const TabularMdp& mdp, const Policy& pi, double tol = kDefaultMetricTol,
                                    std::size_t max_iter = 0) {
  validate(mdp);
  validate(pi, mdp.n_states, mdp.n_actions);
  const auto r = policy_reward(mdp, pi);
  const Matrix p = policy_transition(mdp, pi);
  const Matrix gap = reward_gap(r);
  if (max_iter == 0) max_iter = default_max_iter(mdp.gamma, tol, reward_range(r));
  return detail::iterate_to_fixed_point("mico_fixed_point", mdp.n_states, tol, max_iter,
                                        [&](const Matrix& d) { return mico_operator(gap, p, mdp.gamma, d); });
}

/// Chronological metric indexed by remaining steps k = 0..K. The goal states of both rollouts only
/// decide when the recursion stops, so the table is values[k](x, y) with values[0] = 0.
struct ChronoMetricTable {
  std::vector<Matrix> values;

  std::size_t horizon() const { return values.empty() ? 0 : values.size() - 1; }
};

inline ChronoMetricTable chrono_fixed_point(const TabularMdp& mdp, const Policy& pi, std::size_t K) {
  validate(mdp);
  validate(pi, mdp.n_states, mdp.n_actions);
  const auto r = policy_reward(mdp, pi);
  const Matrix p = policy_transition(mdp, pi);
  const Matrix gap = reward_gap(r);
  ChronoMetricTable t;
  t.values.reserve(K + 1);
  t.values.emplace_back(mdp.n_states, mdp.n_states, 0.0);
  for (std::size_t k = 1; k <= K; ++k) t.values.push_back(mico_operator(gap, p, mdp.gamma, t.values.back()));
  return t;
}

}  // namespace scr
