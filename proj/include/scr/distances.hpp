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
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "scr/common.hpp"

namespace scr {

using Vec = std::span<const double>;

namespace detail {
inline void require_same_dim(Vec a, Vec b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": dimension mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
}
inline double dot(Vec a, Vec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline double squared_norm(Vec a) { return dot(a, a); }

/// Angle between two vectors; zero when either vector is zero.
/// Uses 2 atan2(|u - v|, |u + v|) on the unit vectors, which stays accurate near 0 and pi where
/// acos of a rounded cosine does not (acos(1 - 1ulp) is already 1.5e-8).
inline double angle(Vec a, Vec b) {
  const double na = std::sqrt(squared_norm(a));
  const double nb = std::sqrt(squared_norm(b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double u = a[i] / na, v = b[i] / nb;
    diff += (u - v) * (u - v);
    sum += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}
}  // namespace detail

/// ||a||^2 + ||b||^2 - a.b, the quantity under the root of d_hat. Never negative in exact arithmetic.
inline double d_hat_radicand(Vec a, Vec b) {
  detail::require_same_dim(a, b, "d_hat");
  return detail::squared_norm(a) + detail::squared_norm(b) - detail::dot(a, b);
}

/// Diffuse metric sqrt(||a||^2 + ||b||^2 - a.b). Self-distance is ||a||.
inline double d_hat(Vec a, Vec b) { return std::sqrt(std::max(0.0, d_hat_radicand(a, b))); }

/// MICo angular distance (||a||^2 + ||b||^2) / 2 + beta * angle(a, b).
inline double mico_angular(Vec a, Vec b, double beta = 0.1) {
  detail::require_same_dim(a, b, "mico_angular");
  return 0.5 * (detail::squared_norm(a) + detail::squared_norm(b)) + beta * detail::angle(a, b);
}

/// 1 - cos(a, b). Undefined for zero vectors.
inline double cosine_distance(Vec a, Vec b) {
  detail::require_same_dim(a, b, "cosine_distance");
  const double na = std::sqrt(detail::squared_norm(a));
  const double nb = std::sqrt(detail::squared_norm(b));
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine_distance: zero vector");
  return 1.0 - std::clamp(detail::dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double l1_distance(Vec a, Vec b) {
  detail::require_same_dim(a, b, "l1_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

/// k components of l intervals each; alpha mixes the max and the mean of the component lengths.
struct IqeShape {
  std::size_t k = 1;
  std::size_t l = 1;
  double alpha = 0.5;

  std::size_t dim() const { return k * l; }
};

inline void validate(const IqeShape& shape) {
  if (shape.k == 0 || shape.l == 0) throw ValidationError("IqeShape: k and l must be positive");
  if (!(shape.alpha >= 0.0 && shape.alpha <= 1.0)) throw ValidationError("IqeShape: alpha must lie in [0, 1]");
}

/// Length of the union of intervals [lo_j, max(lo_j, hi_j)], by sorting starts and sweeping.
/// `order` is scratch space of size lo.size().
inline double interval_union_length(Vec lo, Vec hi, std::vector<std::size_t>& order) {
  const std::size_t l = lo.size();
  order.resize(l);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return lo[x] < lo[y] || (lo[x] == lo[y] && x < y);
  });
  double total = 0.0;
  double seg_lo = lo[order[0]];
  double seg_hi = std::max(lo[order[0]], hi[order[0]]);
  for (std::size_t t = 1; t < l; ++t) {
    const std::size_t j = order[t];
    const double s = lo[j];
    const double e = std::max(lo[j], hi[j]);
    if (s > seg_hi) {
      total += seg_hi - seg_lo;
      seg_lo = s;
      seg_hi = e;
    } else if (e > seg_hi) {
      seg_hi = e;
    }
  }
  return total + (seg_hi - seg_lo);
}

/// Per-component union lengths d_1..d_k of IQE.
inline std::vector<double> iqe_components(Vec a, Vec b, const IqeShape& shape) {
  detail::require_same_dim(a, b, "iqe");
  if (a.size() != shape.dim()) {
    throw ShapeError("iqe: dimension " + std::to_string(a.size()) + " != k*l = " + std::to_string(shape.dim()));
  }
  std::vector<double> d(shape.k);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < shape.k; ++i) {
    d[i] = interval_union_length(a.subspan(i * shape.l, shape.l), b.subspan(i * shape.l, shape.l), order);
  }
  return d;
}

/// Interval quasimetric: alpha * max_i d_i + (1 - alpha) * mean_i d_i. Asymmetric.
inline double iqe(Vec a, Vec b, const IqeShape& shape) {
  validate(shape);
  const auto d = iqe_components(a, b, shape);
  const double mx = *std::max_element(d.begin(), d.end());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  return shape.alpha * mx + (1.0 - shape.alpha) * mean;
}

}  // namespace scr
