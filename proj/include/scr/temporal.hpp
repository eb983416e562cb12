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

#include <cmath>
#include <string>
#include <vector>

#include "scr/common.hpp"
#include "scr/mdp.hpp"
#include "scr/rng.hpp"

namespace scr {

/// The endpoint is never reached in exactly k steps from the start.
class UnreachableEndpoint : public Error {
 public:
  using Error::Error;
};

/// E[sum_{t=0}^{k} gamma^t r^pi_{s_t} | s_0 = x, s_k = y] together with P(s_k = y | s_0 = x).
struct ConditionedReturn {
  double value = 0.0;
  double endpoint_prob = 0.0;
  std::size_t k = 0;
};

namespace detail {
inline void check_state(const TabularMdp& mdp, StateId s, const char* op) {
  if (s >= mdp.n_states) throw ValidationError(std::string(op) + ": state index out of range");
}

/// Row vector times matrix.
inline std::vector<double> step_forward(const std::vector<double>& v, const Matrix& p) {
  std::vector<double> out(p.cols, 0.0);
  for (std::size_t s = 0; s < p.rows; ++s) {
    if (v[s] == 0.0) continue;
    for (std::size_t t = 0; t < p.cols; ++t) out[t] += v[s] * p(s, t);
  }
  return out;
}

/// Matrix times column vector.
inline std::vector<double> step_backward(const Matrix& p, const std::vector<double>& v) {
  std::vector<double> out(p.rows, 0.0);
  for (std::size_t s = 0; s < p.rows; ++s) {
    double acc = 0.0;
    for (std::size_t t = 0; t < p.cols; ++t) acc += p(s, t) * v[t];
    out[s] = acc;
  }
  return out;
}

inline ConditionedReturn conditioned_return_impl(const std::vector<double>& r, const Matrix& p, double gamma,
                                                 StateId x, StateId y, std::size_t k) {
  const std::size_t n = r.size();
  // forward[t](s) = P(s_t = s | s_0 = x)
  std::vector<std::vector<double>> forward(k + 1);
  forward[0].assign(n, 0.0);
  forward[0][x] = 1.0;
  for (std::size_t t = 1; t <= k; ++t) forward[t] = step_forward(forward[t - 1], p);

  const double endpoint = forward[k][y];
  if (!(endpoint > 0.0)) {
    throw UnreachableEndpoint("conditioned_return: state " + std::to_string(y) + " is unreachable from " +
                              std::to_string(x) + " in exactly " + std::to_string(k) + " steps");
  }
  // backward(s) = P(s_k = y | s_t = s), walked from t = k down to 0
  std::vector<double> backward(n, 0.0);
  backward[y] = 1.0;
  double total = 0.0;
  for (std::size_t t = k + 1; t-- > 0;) {
    double joint = 0.0;
    for (std::size_t s = 0; s < n; ++s) joint += forward[t][s] * backward[s] * r[s];
    total += std::pow(gamma, static_cast<double>(t)) * joint;
    if (t > 0) backward = step_backward(p, backward);
  }
  return {total / endpoint, endpoint, k};
}
}  // namespace detail

/// P(s_k = y | s_0 = x) under P^pi.
inline double endpoint_probability(const TabularMdp& mdp, const Policy& pi, StateId x, StateId y, std::size_t k) {
  detail::check_state(mdp, x, "endpoint_probability");
  detail::check_state(mdp, y, "endpoint_probability");
  const Matrix p = policy_transition(mdp, pi);
  std::vector<double> v(mdp.n_states, 0.0);
  v[x] = 1.0;
  for (std::size_t t = 0; t < k; ++t) v = detail::step_forward(v, p);
  return v[y];
}

/// Endpoint-conditioned discounted return, inclusive of both t = 0 and t = k. Interior rewards are
/// the policy-averaged r^pi weighted by the bridge occupancy forward_t(s) backward_t(s).
inline ConditionedReturn conditioned_return(const TabularMdp& mdp, const Policy& pi, StateId x, StateId y,
                                            std::size_t k) {
  detail::check_state(mdp, x, "conditioned_return");
  detail::check_state(mdp, y, "conditioned_return");
  return detail::conditioned_return_impl(policy_reward(mdp, pi), policy_transition(mdp, pi), mdp.gamma, x, y, k);
}

/// conditioned_return under the greedy policy of value iteration.
inline ConditionedReturn m_star(const TabularMdp& mdp, StateId x, StateId y, std::size_t k, double tol = 1e-10) {
  const auto vi = value_iteration(mdp, tol);
  return conditioned_return(mdp, vi.greedy, x, y, k);
}

struct LowerBoundCheck {
  bool satisfied = false;
  double gap = 0.0;  // m_value - conditioned_return
};

inline constexpr double kConstraintSlack = 1e-9;

/// Does m_value dominate the conditioned return of pi (the lower constraint on m)?
inline LowerBoundCheck check_lower_bound(const TabularMdp& mdp, const Policy& pi, StateId x, StateId y,
                                         std::size_t k, double m_value) {
  const auto cr = conditioned_return(mdp, pi, x, y, k);
  const double gap = m_value - cr.value;
  return {gap >= -kConstraintSlack, gap};
}

struct UpperBoundCheck {
  bool satisfied = false;
  double slack = 0.0;
};

/// |m(x_i, x_j)| <= d(x_i, y_i') + |m(y_i', y_j')| + d(x_j, y_j').
inline UpperBoundCheck check_upper_bound(double m_xy, double d_xi_yi, double d_xj_yj, double m_yy) {
  if (d_xi_yi < 0.0 || d_xj_yj < 0.0) throw ValidationError("check_upper_bound: distances must be non-negative");
  const double slack = d_xi_yi + std::abs(m_yy) + d_xj_yj - std::abs(m_xy);
  return {slack >= -kConstraintSlack, slack};
}

/// Outcome of the literal lower-bound claim for one policy: over every (x, y, k) with
/// 1 <= k <= k_max reachable under both pi and the greedy optimum, how often the conditioned
/// return of pi exceeds the one of the optimum.
struct PolicySweepEntry {
  std::size_t policy = 0;
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::size_t skipped = 0;  // endpoint unreachable under pi or under the optimum
  double violation_rate = 0.0;
};

inline std::vector<PolicySweepEntry> lower_bound_policy_sweep(const TabularMdp& mdp, std::size_t n_policies,
                                                              std::size_t k_max, std::uint64_t seed) {
  const Policy opt = value_iteration(mdp).greedy;
  const auto r_opt = policy_reward(mdp, opt);
  const Matrix p_opt = policy_transition(mdp, opt);
  std::vector<PolicySweepEntry> out;
  for (std::size_t i = 0; i < n_policies; ++i) {
    Rng rng(seed, "lower_bound_policy_sweep", i);
    const Policy pi = random_policy(mdp.n_states, mdp.n_actions, rng);
    const auto r = policy_reward(mdp, pi);
    const Matrix p = policy_transition(mdp, pi);
    PolicySweepEntry e;
    e.policy = i;
    for (std::size_t k = 1; k <= k_max; ++k) {
      for (StateId x = 0; x < mdp.n_states; ++x) {
        for (StateId y = 0; y < mdp.n_states; ++y) {
          double v = 0.0, m = 0.0;
          try {
            v = detail::conditioned_return_impl(r, p, mdp.gamma, x, y, k).value;
            m = detail::conditioned_return_impl(r_opt, p_opt, mdp.gamma, x, y, k).value;
          } catch (const UnreachableEndpoint&) {
            ++e.skipped;
            continue;
          }
          ++e.checked;
          if (m - v < -kConstraintSlack) ++e.violations;
        }
      }
    }
    e.violation_rate = e.checked > 0 ? static_cast<double>(e.violations) / static_cast<double>(e.checked) : 0.0;
    out.push_back(e);
  }
  return out;
}

}  // namespace scr
