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
#include <span>
#include <string>
#include <vector>

#include "scr/common.hpp"

namespace scr {

struct TransportResult {
  double value = 0.0;
  Matrix plan;  // rows follow mu, columns follow nu (full index range, zeros off support)
  std::size_t augmentations = 0;
};

inline constexpr double kMassTolerance = 1e-9;

/// Exact 1-Wasserstein distance between two discrete distributions for a ground cost.
///
/// Successive shortest augmenting paths on the bipartite transport graph restricted to the
/// supports. Path lengths are compared on integer costs: each cost is multiplied by the largest
/// power of two that keeps every augmenting path sum below 2^62, then rounded. Comparisons are
/// exact and the rounding is at double resolution. The returned value is evaluated on the
/// unscaled costs of the optimal plan.
inline TransportResult wasserstein1(std::span<const double> mu, std::span<const double> nu, const Matrix& cost) {
  if (cost.rows != mu.size() || cost.cols != nu.size()) throw ShapeError("wasserstein1: cost shape mismatch");
  auto check_dist = [](std::span<const double> p, const char* name) {
    double s = 0.0;
    for (double v : p) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ValidationError(std::string("wasserstein1: ") + name + " has a negative or non-finite entry");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > kMassTolerance) {
      throw ValidationError(std::string("wasserstein1: ") + name + " is not normalized");
    }
  };
  check_dist(mu, "mu");
  check_dist(nu, "nu");

  std::vector<std::size_t> src, dst;
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (mu[i] > 0.0) src.push_back(i);
  for (std::size_t j = 0; j < nu.size(); ++j)
    if (nu[j] > 0.0) dst.push_back(j);
  const std::size_t m = src.size(), n = dst.size();

  double max_cost = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double v = cost(src[a], dst[b]);
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("wasserstein1: costs must be finite and non-negative");
      max_cost = std::max(max_cost, v);
    }
  }
  const double budget = std::ldexp(1.0, 62) / static_cast<double>(2 * (m + n) + 2);
  const double scale = max_cost > 0.0 ? std::ldexp(1.0, std::ilogb(budget / max_cost)) : 1.0;
  std::vector<std::int64_t> c(m * n);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < n; ++b) c[a * n + b] = std::llround(cost(src[a], dst[b]) * scale);
  }

  std::vector<double> supply(m), demand(n), flow(m * n, 0.0);
  for (std::size_t a = 0; a < m; ++a) supply[a] = mu[src[a]];
  for (std::size_t b = 0; b < n; ++b) demand[b] = nu[dst[b]];

  constexpr double eps = 1e-15;
  constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
  // Node ids: sources 0..m-1, sinks m..m+n-1.
  std::vector<std::int64_t> dist(m + n);
  std::vector<std::int64_t> pred(m + n);

  TransportResult result;
  const std::size_t max_aug = 64 * (m + n) * (m + n) + 16;
  while (result.augmentations < max_aug) {
    bool any_supply = false, any_demand = false;
    for (double s : supply) any_supply |= s > eps;
    for (double d : demand) any_demand |= d > eps;
    if (!any_supply || !any_demand) break;

    std::fill(dist.begin(), dist.end(), inf);
    std::fill(pred.begin(), pred.end(), -1);
    for (std::size_t a = 0; a < m; ++a)
      if (supply[a] > eps) dist[a] = 0;
    // Bellman-Ford over forward arcs (source -> sink, uncapacitated) and reverse arcs on flow.
    for (std::size_t round = 0; round < m + n; ++round) {
      bool changed = false;
      for (std::size_t a = 0; a < m; ++a) {
        if (dist[a] == inf) continue;
        for (std::size_t b = 0; b < n; ++b) {
          const std::int64_t nd = dist[a] + c[a * n + b];
          if (nd < dist[m + b]) {
            dist[m + b] = nd;
            pred[m + b] = static_cast<std::int64_t>(a);
            changed = true;
          }
        }
      }
      for (std::size_t b = 0; b < n; ++b) {
        if (dist[m + b] == inf) continue;
        for (std::size_t a = 0; a < m; ++a) {
          if (flow[a * n + b] <= eps) continue;
          const std::int64_t nd = dist[m + b] - c[a * n + b];
          if (nd < dist[a]) {
            dist[a] = nd;
            pred[a] = static_cast<std::int64_t>(m + b);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }

    std::size_t sink = m + n;
    for (std::size_t b = 0; b < n; ++b) {
      if (demand[b] > eps && dist[m + b] < inf && (sink == m + n || dist[m + b] < dist[sink])) sink = m + b;
    }
    if (sink == m + n) break;

    // Walk back to the originating source, collecting the bottleneck.
    double bottleneck = demand[sink - m];
    std::size_t v = sink;
    while (pred[v] >= 0) {
      const auto u = static_cast<std::size_t>(pred[v]);
      if (v < m) bottleneck = std::min(bottleneck, flow[v * n + (u - m)]);  // reverse arc u(sink)->v(source)
      v = u;
    }
    bottleneck = std::min(bottleneck, supply[v]);
    const std::size_t origin = v;

    v = sink;
    while (pred[v] >= 0) {
      const auto u = static_cast<std::size_t>(pred[v]);
      if (v >= m) {
        flow[u * n + (v - m)] += bottleneck;
      } else {
        flow[v * n + (u - m)] -= bottleneck;
      }
      v = u;
    }
    supply[origin] -= bottleneck;
    demand[sink - m] -= bottleneck;
    ++result.augmentations;
  }

  result.plan = Matrix(mu.size(), nu.size(), 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double f = std::max(0.0, flow[a * n + b]);
      result.plan(src[a], dst[b]) = f;
      result.value += f * cost(src[a], dst[b]);
    }
  }

  for (std::size_t i = 0; i < mu.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < nu.size(); ++j) s += result.plan(i, j);
    if (std::abs(s - mu[i]) > kMassTolerance) throw Error("wasserstein1: plan violates the source marginal");
  }
  for (std::size_t j = 0; j < nu.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) s += result.plan(i, j);
    if (std::abs(s - nu[j]) > kMassTolerance) throw Error("wasserstein1: plan violates the target marginal");
  }
  return result;
}

}  // namespace scr
