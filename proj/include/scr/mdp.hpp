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
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scr/common.hpp"
#include "scr/rng.hpp"

namespace scr {

using StateId = std::size_t;
using ActionId = std::size_t;

inline constexpr double kRowSumTolerance = 1e-12;

/// Finite MDP with dense transition table [state][action][next_state] and reward table [state][action].
struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  double gamma = 0.0;
  std::vector<double> transition;  // n_states * n_actions * n_states
  Matrix reward;                   // n_states x n_actions

  TabularMdp() = default;
  TabularMdp(std::size_t states, std::size_t actions, double discount)
      : n_states(states),
        n_actions(actions),
        gamma(discount),
        transition(states * actions * states, 0.0),
        reward(states, actions, 0.0) {}

  double& p(StateId s, ActionId a, StateId next) { return transition[(s * n_actions + a) * n_states + next]; }
  double p(StateId s, ActionId a, StateId next) const {
    return transition[(s * n_actions + a) * n_states + next];
  }
  std::span<const double> row(StateId s, ActionId a) const {
    return {transition.data() + (s * n_actions + a) * n_states, n_states};
  }
};

/// Per-state action distribution.
struct Policy {
  Matrix probs;  // n_states x n_actions

  std::size_t n_states() const { return probs.rows; }
  std::size_t n_actions() const { return probs.cols; }
  std::span<const double> row(StateId s) const { return {probs.data.data() + s * probs.cols, probs.cols}; }
};

/// One rollout: states has one more entry than actions/rewards (the terminal successor).
struct Trajectory {
  std::vector<StateId> states;
  std::vector<ActionId> actions;
  std::vector<double> rewards;

  std::size_t length() const { return actions.size(); }
};

/// One (x_i, x_j) sample drawn from a trajectory, with everything the losses consume.
struct ChronoSample {
  StateId x_i = 0;
  StateId x_i_next = 0;
  StateId x_j = 0;
  StateId x_j_next = 0;
  ActionId a_i = 0;
  double r_i = 0.0;
  double r_j = 0.0;
  double agg_rew = 0.0;  // sum_{t=0}^{gap} gamma^t r_{i+t}, both ends inclusive
  std::size_t step_gap = 1;
  std::size_t trajectory = 0;  // index into the source set
  std::size_t i = 0;           // position of x_i in the source trajectory
};

using ChronoBatch = std::vector<ChronoSample>;

// ---------------------------------------------------------------------------
// Validation

namespace detail {
inline std::string where(std::initializer_list<std::size_t> idx) {
  std::ostringstream os;
  os << '[';
  bool first = true;
  for (auto i : idx) {
    if (!first) os << "][";
    os << i;
    first = false;
  }
  os << ']';
  return os.str();
}
}  // namespace detail

/// Throws ValidationError naming the first violated invariant.
inline void validate(const TabularMdp& mdp) {
  if (mdp.n_states == 0) throw ValidationError("n_states must be positive");
  if (mdp.n_actions == 0) throw ValidationError("n_actions must be positive");
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0)) {
    throw ValidationError("discount gamma must lie in [0, 1), got " + std::to_string(mdp.gamma));
  }
  if (mdp.transition.size() != mdp.n_states * mdp.n_actions * mdp.n_states) {
    throw ValidationError("transition table has wrong size");
  }
  if (mdp.reward.rows != mdp.n_states || mdp.reward.cols != mdp.n_actions) {
    throw ValidationError("reward table has wrong shape");
  }
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      if (!std::isfinite(mdp.reward(s, a))) {
        throw ValidationError("reward" + detail::where({s, a}) + " is not finite");
      }
      double sum = 0.0;
      for (StateId n = 0; n < mdp.n_states; ++n) {
        const double v = mdp.p(s, a, n);
        if (!(v >= 0.0 && v <= 1.0)) {
          throw ValidationError("transition" + detail::where({s, a, n}) + " outside [0, 1]");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        std::ostringstream os;
        os.precision(17);
        os << "transition" << detail::where({s, a}) << " row sum " << sum << " != 1";
        throw ValidationError(os.str());
      }
    }
  }
}

inline void validate(const Policy& pi, std::size_t n_states, std::size_t n_actions) {
  if (pi.n_states() != n_states || pi.n_actions() != n_actions) {
    throw ShapeError("policy shape does not match the MDP");
  }
  for (StateId s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (ActionId a = 0; a < n_actions; ++a) {
      const double v = pi.probs(s, a);
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("policy" + detail::where({s, a}) + " outside [0, 1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ValidationError("policy" + detail::where({s}) + " row sum != 1");
    }
  }
}

// ---------------------------------------------------------------------------
// Policies

inline Policy uniform_policy(std::size_t n_states, std::size_t n_actions) {
  return Policy{Matrix(n_states, n_actions, 1.0 / static_cast<double>(n_actions))};
}

inline Policy deterministic_policy(const std::vector<ActionId>& actions, std::size_t n_actions) {
  Policy pi{Matrix(actions.size(), n_actions, 0.0)};
  for (StateId s = 0; s < actions.size(); ++s) pi.probs(s, actions[s]) = 1.0;
  return pi;
}

/// Mixes a base policy with the uniform one: (1 - eps) * base + eps / |A|.
inline Policy epsilon_greedy(const Policy& base, double eps) {
  Policy pi = base;
  const double u = eps / static_cast<double>(base.n_actions());
  for (double& v : pi.probs.data) v = (1.0 - eps) * v + u;
  return pi;
}

/// Random policy with each row drawn from a flat Dirichlet.
inline Policy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  Policy pi{Matrix(n_states, n_actions)};
  for (StateId s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (ActionId a = 0; a < n_actions; ++a) {
      pi.probs(s, a) = -std::log(1.0 - rng.uniform());
      sum += pi.probs(s, a);
    }
    for (ActionId a = 0; a < n_actions; ++a) pi.probs(s, a) /= sum;
  }
  return pi;
}

// ---------------------------------------------------------------------------
// Policy-induced quantities

/// r^pi_x = sum_a pi(a|x) r(x, a).
inline std::vector<double> policy_reward(const TabularMdp& mdp, const Policy& pi) {
  if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions) {
    throw ShapeError("policy_reward: policy shape does not match the MDP");
  }
  std::vector<double> r(mdp.n_states, 0.0);
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) r[s] += pi.probs(s, a) * mdp.reward(s, a);
  }
  return r;
}

/// P^pi[x][x'] = sum_a pi(a|x) P(x'|x, a).
inline Matrix policy_transition(const TabularMdp& mdp, const Policy& pi) {
  if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions) {
    throw ShapeError("policy_transition: policy shape does not match the MDP");
  }
  Matrix p(mdp.n_states, mdp.n_states, 0.0);
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      const double w = pi.probs(s, a);
      if (w == 0.0) continue;
      for (StateId n = 0; n < mdp.n_states; ++n) p(s, n) += w * mdp.p(s, a, n);
    }
  }
  return p;
}

struct ValueIterationResult {
  std::vector<double> values;
  Policy greedy;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Bellman optimality iteration until the sup-norm residual is at most tol.
/// The greedy policy breaks ties toward the lowest action index.
inline ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-10,
                                            std::size_t max_iter = 1000000) {
  validate(mdp);
  if (!(tol > 0.0)) throw ValidationError("value_iteration: tol must be positive");
  const std::size_t n = mdp.n_states;
  std::vector<double> v(n, 0.0), next(n, 0.0);
  std::vector<ActionId> best(n, 0);

  auto backup = [&](const std::vector<double>& values, std::vector<double>& out) {
    for (StateId s = 0; s < n; ++s) {
      double best_q = -std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < mdp.n_actions; ++a) {
        double q = mdp.reward(s, a);
        const auto row = mdp.row(s, a);
        double ev = 0.0;
        for (StateId t = 0; t < n; ++t) ev += row[t] * values[t];
        q += mdp.gamma * ev;
        if (q > best_q) {
          best_q = q;
          best[s] = a;
        }
      }
      out[s] = best_q;
    }
  };

  ValueIterationResult result;
  double residual = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  while (it < max_iter) {
    backup(v, next);
    ++it;
    residual = 0.0;
    for (StateId s = 0; s < n; ++s) residual = std::max(residual, std::abs(next[s] - v[s]));
    v.swap(next);
    // |Bv - v| <= gamma * |v - v_prev|, so the residual of the returned values is at most this.
    if (residual * mdp.gamma <= tol) break;
  }
  backup(v, next);  // settles `best` for the returned values
  result.residual = 0.0;
  for (StateId s = 0; s < n; ++s) result.residual = std::max(result.residual, std::abs(next[s] - v[s]));
  result.values = std::move(v);
  result.greedy = deterministic_policy(best, mdp.n_actions);
  result.iterations = it;
  return result;
}

// ---------------------------------------------------------------------------
// Sampling

inline Trajectory sample_trajectory(const TabularMdp& mdp, const Policy& pi, StateId start, std::size_t horizon,
                                    std::uint64_t seed) {
  if (horizon < 1) throw ValidationError("sample_trajectory: horizon must be at least 1");
  if (start >= mdp.n_states) throw ValidationError("sample_trajectory: start state out of range");
  Rng rng(seed, "sample_trajectory");
  Trajectory tr;
  tr.states.reserve(horizon + 1);
  tr.actions.reserve(horizon);
  tr.rewards.reserve(horizon);
  StateId s = start;
  tr.states.push_back(s);
  for (std::size_t t = 0; t < horizon; ++t) {
    const ActionId a = rng.categorical(pi.row(s));
    tr.actions.push_back(a);
    tr.rewards.push_back(mdp.reward(s, a));
    s = rng.categorical(mdp.row(s, a));
    tr.states.push_back(s);
  }
  return tr;
}

/// Draws batch_size samples. For each: a trajectory uniformly, then i uniformly over positions
/// that admit at least k_min steps, then the gap uniformly in [k_min, min(k_max, last - i)].
/// x_j is kept strictly before the terminal state so r_j and x_{j+1} are recorded values.
inline ChronoBatch sample_chrono_batch(const std::vector<Trajectory>& trajectories, std::size_t batch_size,
                                       std::size_t k_min, std::size_t k_max, double gamma, std::uint64_t seed) {
  if (trajectories.empty()) throw ValidationError("sample_chrono_batch: empty trajectory set");
  if (k_min < 1 || k_min > k_max) throw ValidationError("sample_chrono_batch: need 1 <= k_min <= k_max");
  for (const auto& tr : trajectories) {
    if (tr.length() <= k_min) {
      throw ValidationError("sample_chrono_batch: every trajectory must be longer than k_min");
    }
  }
  Rng rng(seed, "sample_chrono_batch");
  ChronoBatch batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t ti = static_cast<std::size_t>(rng.index(trajectories.size()));
    const Trajectory& tr = trajectories[ti];
    const std::size_t last = tr.length() - 1;  // last position with a recorded action
    const std::size_t i = static_cast<std::size_t>(rng.index(last - k_min + 1));
    const std::size_t hi = std::min(k_max, last - i);
    const std::size_t gap = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(k_min),
                                                                 static_cast<std::int64_t>(hi)));
    const std::size_t j = i + gap;
    ChronoSample s;
    s.x_i = tr.states[i];
    s.x_i_next = tr.states[i + 1];
    s.x_j = tr.states[j];
    s.x_j_next = tr.states[j + 1];
    s.a_i = tr.actions[i];
    s.r_i = tr.rewards[i];
    s.r_j = tr.rewards[j];
    double agg = 0.0, disc = 1.0;
    for (std::size_t t = 0; t <= gap; ++t) {
      agg += disc * tr.rewards[i + t];
      disc *= gamma;
    }
    s.agg_rew = agg;
    s.step_gap = gap;
    s.trajectory = ti;
    s.i = i;
    batch.push_back(s);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Generators

struct GridCell {
  std::size_t row = 0;
  std::size_t col = 0;
};

/// Four-rooms layout on a size x size grid: one wall column and one wall row through the
/// middle, each wall pierced by a door in the middle of every half. Grid edges are walls.
struct FourRoomsLayout {
  std::size_t size = 0;
  std::vector<bool> open;             // size * size
  std::vector<std::size_t> state_of;  // cell -> state id, or npos for walls
  std::vector<GridCell> cell_of;      // state id -> cell

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit FourRoomsLayout(std::size_t n) : size(n), open(n * n, true), state_of(n * n, npos) {
    const std::size_t mid = n / 2;
    for (std::size_t k = 0; k < n; ++k) {
      open[mid * n + k] = false;
      open[k * n + mid] = false;
    }
    const std::size_t first_half = (mid - 1) / 2;
    const std::size_t second_half = mid + 1 + (n - mid - 2) / 2;
    open[first_half * n + mid] = true;   // top door in the wall column
    open[second_half * n + mid] = true;  // bottom door
    open[mid * n + first_half] = true;   // left door in the wall row
    open[mid * n + second_half] = true;  // right door
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        if (open[r * n + c]) {
          state_of[r * n + c] = cell_of.size();
          cell_of.push_back({r, c});
        }
      }
    }
  }

  bool is_open(std::size_t r, std::size_t c) const { return open[r * size + c]; }
};

/// Gridworld with 4 moves (up, down, left, right). With probability `slip` a uniformly random
/// move replaces the chosen one. Reward 1 for any action taken at the goal, which is absorbing.
inline TabularMdp four_rooms(std::size_t size, GridCell goal, double slip, double gamma = 0.9) {
  if (size < 5) throw ValidationError("four_rooms: size must be at least 5");
  if (!(slip >= 0.0 && slip < 1.0)) throw ValidationError("four_rooms: slip must lie in [0, 1)");
  if (goal.row >= size || goal.col >= size) throw ValidationError("four_rooms: goal outside grid");
  FourRoomsLayout layout(size);
  if (!layout.is_open(goal.row, goal.col)) throw ValidationError("four_rooms: goal is a wall cell");

  const std::size_t n = layout.cell_of.size();
  TabularMdp mdp(n, 4, gamma);
  const StateId goal_state = layout.state_of[goal.row * size + goal.col];
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  auto move = [&](StateId s, int m) -> StateId {
    const auto [r, c] = layout.cell_of[s];
    const long nr = static_cast<long>(r) + dr[m];
    const long nc = static_cast<long>(c) + dc[m];
    if (nr < 0 || nc < 0 || nr >= static_cast<long>(size) || nc >= static_cast<long>(size)) return s;
    if (!layout.is_open(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc))) return s;
    return layout.state_of[static_cast<std::size_t>(nr) * size + static_cast<std::size_t>(nc)];
  };
  for (StateId s = 0; s < n; ++s) {
    for (ActionId a = 0; a < 4; ++a) {
      if (s == goal_state) {
        mdp.p(s, a, s) = 1.0;
        mdp.reward(s, a) = 1.0;
        continue;
      }
      mdp.p(s, a, move(s, static_cast<int>(a))) += 1.0 - slip;
      for (int m = 0; m < 4; ++m) mdp.p(s, a, move(s, m)) += slip / 4.0;
    }
  }
  return mdp;
}

/// Random MDP: each (state, action) row has `support` distinct successors with flat-Dirichlet
/// weights; rewards uniform in [reward_lo, reward_hi].
inline TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, std::size_t support, double gamma,
                             std::uint64_t seed, double reward_lo = 0.0, double reward_hi = 1.0) {
  if (n_states == 0 || n_actions == 0) throw ValidationError("random_mdp: empty state or action set");
  support = std::clamp<std::size_t>(support, 1, n_states);
  Rng rng(seed, "random_mdp");
  TabularMdp mdp(n_states, n_actions, gamma);
  for (StateId s = 0; s < n_states; ++s) {
    for (ActionId a = 0; a < n_actions; ++a) {
      mdp.reward(s, a) = rng.uniform(reward_lo, reward_hi);
      auto perm = rng.permutation(n_states);
      std::vector<double> w(support);
      double sum = 0.0;
      for (auto& x : w) {
        x = -std::log(1.0 - rng.uniform());
        sum += x;
      }
      for (std::size_t k = 0; k < support; ++k) mdp.p(s, a, perm[k]) = w[k] / sum;
      // absorb round-off in the largest entry so the row sums to 1 as closely as doubles allow
      double total = 0.0;
      for (StateId t = 0; t < n_states; ++t) total += mdp.p(s, a, t);
      mdp.p(s, a, perm[0]) += 1.0 - total;
    }
  }
  return mdp;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const TabularMdp& mdp) {
  nlohmann::json j;
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  j["gamma"] = mdp.gamma;
  auto tr = nlohmann::json::array();
  auto rw = nlohmann::json::array();
  for (StateId s = 0; s < mdp.n_states; ++s) {
    auto per_action = nlohmann::json::array();
    auto rewards = nlohmann::json::array();
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      auto r = mdp.row(s, a);
      per_action.push_back(std::vector<double>(r.begin(), r.end()));
      rewards.push_back(mdp.reward(s, a));
    }
    tr.push_back(std::move(per_action));
    rw.push_back(std::move(rewards));
  }
  j["transition"] = std::move(tr);
  j["reward"] = std::move(rw);
  return j;
}

/// Parses and validates an MDP document.
inline TabularMdp mdp_from_json(const nlohmann::json& j) {
  try {
    const auto n = j.at("n_states").get<std::size_t>();
    const auto m = j.at("n_actions").get<std::size_t>();
    TabularMdp mdp(n, m, j.at("gamma").get<double>());
    const auto& tr = j.at("transition");
    const auto& rw = j.at("reward");
    if (tr.size() != n || rw.size() != n) throw ValidationError("MDP document: table sizes do not match n_states");
    for (StateId s = 0; s < n; ++s) {
      if (tr[s].size() != m || rw[s].size() != m) {
        throw ValidationError("MDP document: table sizes do not match n_actions");
      }
      for (ActionId a = 0; a < m; ++a) {
        mdp.reward(s, a) = rw[s][a].get<double>();
        if (tr[s][a].size() != n) throw ValidationError("MDP document: transition row has wrong length");
        for (StateId t = 0; t < n; ++t) mdp.p(s, a, t) = tr[s][a][t].get<double>();
      }
    }
    validate(mdp);
    return mdp;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("MDP document: ") + e.what());
  }
}

/// CSV with header "step,state,action,reward"; the terminal state is a final row with empty
/// action and reward fields.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << "step,state,action,reward\n";
  std::ostringstream num;
  num.precision(17);
  for (std::size_t t = 0; t < tr.length(); ++t) {
    num.str("");
    num << tr.rewards[t];
    os << t << ',' << tr.states[t] << ',' << tr.actions[t] << ',' << num.str() << '\n';
  }
  os << tr.length() << ',' << tr.states.back() << ",,\n";
}

}  // namespace scr
