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

// Brute-force reference computations. They share no code with the production paths beyond the
// MDP container, and trade speed for obviousness; sizes are kept small by the callers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "scr/common.hpp"
#include "scr/mdp.hpp"

namespace scr::oracle {

namespace detail {

/// Solves A z = b for a tall system (rows >= cols) by Gaussian elimination with partial pivoting.
/// Returns nothing when A is rank deficient or the system is inconsistent.
inline std::optional<std::vector<double>> solve_exact(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t rows = a.size();
  const std::size_t cols = rows == 0 ? 0 : a[0].size();
  std::size_t r = 0;
  std::vector<std::size_t> pivot_row(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    std::size_t best = r;
    for (std::size_t i = r; i < rows; ++i)
      if (std::abs(a[i][c]) > std::abs(a[best][c])) best = i;
    if (best >= rows || std::abs(a[best][c]) < 1e-12) return std::nullopt;
    std::swap(a[best], a[r]);
    std::swap(b[best], b[r]);
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == r || a[i][c] == 0.0) continue;
      const double f = a[i][c] / a[r][c];
      for (std::size_t k = c; k < cols; ++k) a[i][k] -= f * a[r][k];
      b[i] -= f * b[r];
    }
    pivot_row[c] = r++;
  }
  for (std::size_t i = r; i < rows; ++i)
    if (std::abs(b[i]) > 1e-9) return std::nullopt;
  std::vector<double> z(cols);
  for (std::size_t c = 0; c < cols; ++c) z[c] = b[pivot_row[c]] / a[pivot_row[c]][c];
  return z;
}

inline void for_each_subset(std::size_t n, std::size_t k, const std::function<void(const std::vector<std::size_t>&)>& f) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  if (k > n) return;
  while (true) {
    f(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace detail

/// Minimum transport cost over all basic feasible plans. Only the positive-mass rows and
/// columns take part; every vertex of the polytope is basic over (m + n - 1) cells.
inline double transport_by_vertices(std::span<const double> mu, std::span<const double> nu, const Matrix& cost) {
  std::vector<std::size_t> src, dst;
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (mu[i] > 0.0) src.push_back(i);
  for (std::size_t j = 0; j < nu.size(); ++j)
    if (nu[j] > 0.0) dst.push_back(j);
  const std::size_t m = src.size(), n = dst.size(), cells = m * n, basis = m + n - 1;

  double best = std::numeric_limits<double>::infinity();
  detail::for_each_subset(cells, basis, [&](const std::vector<std::size_t>& chosen) {
    std::vector<std::vector<double>> a(m + n, std::vector<double>(basis, 0.0));
    std::vector<double> b(m + n);
    for (std::size_t i = 0; i < m; ++i) b[i] = mu[src[i]];
    for (std::size_t j = 0; j < n; ++j) b[m + j] = nu[dst[j]];
    for (std::size_t c = 0; c < basis; ++c) {
      a[chosen[c] / n][c] = 1.0;
      a[m + chosen[c] % n][c] = 1.0;
    }
    const auto z = detail::solve_exact(std::move(a), std::move(b));
    if (!z) return;
    double value = 0.0;
    for (std::size_t c = 0; c < basis; ++c) {
      if ((*z)[c] < -1e-12) return;
      value += std::max(0.0, (*z)[c]) * cost(src[chosen[c] / n], dst[chosen[c] % n]);
    }
    best = std::min(best, value);
  });
  return best;
}

/// r^pi and P^pi written out directly from the tables.
struct InducedChain {
  std::vector<double> reward;
  std::vector<std::vector<double>> next;
};

inline InducedChain induce(const TabularMdp& mdp, const Policy& pi) {
  InducedChain c;
  c.reward.assign(mdp.n_states, 0.0);
  c.next.assign(mdp.n_states, std::vector<double>(mdp.n_states, 0.0));
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double w = pi.probs(s, a);
      c.reward[s] += w * mdp.reward(s, a);
      for (std::size_t t = 0; t < mdp.n_states; ++t) c.next[s][t] += w * mdp.p(s, a, t);
    }
  }
  return c;
}

/// Calls f(path, probability) for every state path of `steps` transitions starting at `start`
/// that has positive probability.
inline void for_each_path(const InducedChain& c, std::size_t start, std::size_t steps,
                          const std::function<void(const std::vector<std::size_t>&, double)>& f) {
  std::vector<std::size_t> path{start};
  std::function<void(double)> walk = [&](double prob) {
    if (path.size() == steps + 1) {
      f(path, prob);
      return;
    }
    const std::size_t s = path.back();
    for (std::size_t t = 0; t < c.reward.size(); ++t) {
      if (c.next[s][t] == 0.0) continue;
      path.push_back(t);
      walk(prob * c.next[s][t]);
      path.pop_back();
    }
  };
  walk(1.0);
}

/// values[k](x, y) = sum over pairs of independent k-step paths of
/// P(path_x) P(path_y) sum_{t<k} gamma^t |r_{x_t} - r_{y_t}|.
inline std::vector<Matrix> chrono_by_paths(const TabularMdp& mdp, const Policy& pi, std::size_t K) {
  const InducedChain c = induce(mdp, pi);
  const std::size_t n = mdp.n_states;
  std::vector<Matrix> out;
  out.emplace_back(n, n, 0.0);
  for (std::size_t k = 1; k <= K; ++k) {
    Matrix v(n, n, 0.0);
    std::vector<std::vector<std::pair<std::vector<std::size_t>, double>>> paths(n);
    for (std::size_t s = 0; s < n; ++s)
      for_each_path(c, s, k - 1, [&](const std::vector<std::size_t>& p, double w) { paths[s].push_back({p, w}); });
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t y = 0; y < n; ++y) {
        double total = 0.0;
        for (const auto& [px, wx] : paths[x]) {
          for (const auto& [py, wy] : paths[y]) {
            double disc = 1.0, sum = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
              sum += disc * std::abs(c.reward[px[t]] - c.reward[py[t]]);
              disc *= mdp.gamma;
            }
            total += wx * wy * sum;
          }
        }
        v(x, y) = total;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

struct PathConditioned {
  double value = 0.0;
  double endpoint_prob = 0.0;
};

/// Endpoint-conditioned discounted return by listing every k-step path from x and keeping those
/// that end in y. value is NaN when no such path exists.
inline PathConditioned conditioned_by_paths(const TabularMdp& mdp, const Policy& pi, std::size_t x, std::size_t y,
                                            std::size_t k) {
  const InducedChain c = induce(mdp, pi);
  PathConditioned out;
  double weighted = 0.0;
  for_each_path(c, x, k, [&](const std::vector<std::size_t>& p, double w) {
    if (p.back() != y) return;
    double disc = 1.0, sum = 0.0;
    for (std::size_t s : p) {
      sum += disc * c.reward[s];
      disc *= mdp.gamma;
    }
    out.endpoint_prob += w;
    weighted += w * sum;
  });
  out.value = out.endpoint_prob > 0.0 ? weighted / out.endpoint_prob : std::numeric_limits<double>::quiet_NaN();
  return out;
}

/// `applications` rounds of d <- |r_x - r_y| + gamma sum_{x',y'} P(x'|x) P(y'|y) d(x',y') from zero.
inline Matrix mico_by_unrolling(const TabularMdp& mdp, const Policy& pi, std::size_t applications) {
  const std::size_t n = mdp.n_states;
  Matrix d(n, n, 0.0);
  for (std::size_t it = 0; it < applications; ++it) {
    Matrix next(n, n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t y = 0; y < n; ++y) {
        double rx = 0.0, ry = 0.0, expect = 0.0;
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
          rx += pi.probs(x, a) * mdp.reward(x, a);
          ry += pi.probs(y, a) * mdp.reward(y, a);
        }
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
          for (std::size_t b = 0; b < mdp.n_actions; ++b)
            for (std::size_t u = 0; u < n; ++u)
              for (std::size_t v = 0; v < n; ++v)
                expect += pi.probs(x, a) * pi.probs(y, b) * mdp.p(x, a, u) * mdp.p(y, b, v) * d(u, v);
        next(x, y) = std::abs(rx - ry) + mdp.gamma * expect;
      }
    }
    d = std::move(next);
  }
  return d;
}

}  // namespace scr::oracle
