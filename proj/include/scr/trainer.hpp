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
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "scr/distances.hpp"
#include "scr/exact_metrics.hpp"
#include "scr/grad.hpp"
#include "scr/mdp.hpp"
#include "scr/optim.hpp"
#include "scr/rng.hpp"
#include "scr/temporal.hpp"

namespace scr {

/// How the upper-constraint loss stands in for the partner rollout's measurement.
enum class UpperBoundForm {
  kSampledReturn,  // the partner's sampled discounted reward sum
  kLearnedMeasure  // m_hat on the partner's (x_i, x_j) embeddings
};

enum class OptimizerKind { kAdam, kSgd };

struct TrainerConfig {
  std::size_t n_dim = 16;  // must equal iqe_k * iqe_l
  std::size_t iqe_k = 4;
  std::size_t iqe_l = 4;
  std::size_t hidden = 64;
  std::size_t batch = 128;
  std::size_t steps = 20000;
  std::size_t k_min = 1;
  std::size_t k_max = 0;  // 0: min(10, horizon / 2)
  double alpha_phi = 0.05;
  double eps_greedy = 0.3;
  std::size_t replay_refresh = 500;
  std::size_t n_trajectories = 32;
  std::size_t horizon = 50;
  std::size_t eval_every = 500;
  double phi_init_scale = 0.1;
  UpperBoundForm l_up_form = UpperBoundForm::kSampledReturn;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  AdamConfig adam{};

  std::size_t resolved_k_max() const { return k_max != 0 ? k_max : std::max<std::size_t>(1, std::min<std::size_t>(10, horizon / 2)); }
};

inline void validate(const TrainerConfig& c) {
  if (c.n_dim == 0 || c.iqe_k * c.iqe_l != c.n_dim) throw ValidationError("trainer: n_dim must equal iqe_k * iqe_l");
  if (c.hidden == 0) throw ValidationError("trainer: hidden width must be positive");
  if (c.batch == 0) throw ValidationError("trainer: batch must be positive");
  if (c.k_min < 1 || c.k_min > c.resolved_k_max()) throw ValidationError("trainer: need 1 <= k_min <= k_max");
  if (c.horizon <= c.k_min) throw ValidationError("trainer: horizon must exceed k_min");
  if (!(c.alpha_phi > 0.0 && c.alpha_phi <= 1.0)) throw ValidationError("trainer: alpha_phi must lie in (0, 1]");
  if (!(c.eps_greedy >= 0.0 && c.eps_greedy <= 1.0)) throw ValidationError("trainer: eps_greedy must lie in [0, 1]");
  if (c.n_trajectories == 0) throw ValidationError("trainer: n_trajectories must be positive");
  if (c.replay_refresh == 0 || c.eval_every == 0) throw ValidationError("trainer: refresh and eval periods must be positive");
  if (!(c.adam.lr > 0.0)) throw ValidationError("trainer: lr must be positive");
}

/// Total loss left the finite range or exceeded the divergence threshold.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

inline constexpr double kDivergenceThreshold = 1e8;

// ---------------------------------------------------------------------------
// Model

/// Trainable state of one run: phi table, psi MLP, m_hat mixing scalar, and the EMA target of phi.
struct ScrModel {
  ParamStore params;  // "phi", "psi.w1", "psi.b1", "psi.w2", "psi.b2", "m.raw_alpha"
  Tensor target_phi;
  std::size_t iqe_k = 4;
  std::size_t iqe_l = 4;

  std::size_t n_dim() const { return params.at("phi").cols; }
  double alpha() const { return 1.0 / (1.0 + std::exp(-params.at("m.raw_alpha").data[0])); }
};

inline ScrModel init_model(std::size_t n_states, const TrainerConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed, "init_model");
  ScrModel m;
  m.iqe_k = cfg.iqe_k;
  m.iqe_l = cfg.iqe_l;
  Tensor phi(n_states, cfg.n_dim);
  for (double& v : phi.data) v = cfg.phi_init_scale * rng.normal();
  auto glorot = [&](std::size_t in, std::size_t out) {
    Tensor w(in, out);
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : w.data) v = rng.uniform(-a, a);
    return w;
  };
  m.target_phi = phi;
  m.params.add("phi", std::move(phi));
  m.params.add("psi.w1", glorot(2 * cfg.n_dim, cfg.hidden));
  m.params.add("psi.b1", Tensor(1, cfg.hidden, 0.0));
  m.params.add("psi.w2", glorot(cfg.hidden, cfg.n_dim));
  m.params.add("psi.b2", Tensor(1, cfg.n_dim, 0.0));
  m.params.add("m.raw_alpha", Tensor(1, 1, 0.0));
  return m;
}

/// phi-bar <- alpha phi + (1 - alpha) phi-bar.
inline void ema_update(Tensor& target, const Tensor& source, double alpha) {
  if (target.rows != source.rows || target.cols != source.cols) throw ShapeError("ema_update: shape mismatch");
  for (std::size_t i = 0; i < target.data.size(); ++i) {
    target.data[i] = alpha * source.data[i] + (1.0 - alpha) * target.data[i];
  }
}

/// Model parameters placed on a tape.
struct BoundModel {
  grad::Var phi, target_phi, w1, b1, w2, b2, raw_alpha;
  std::size_t iqe_k = 4, iqe_l = 4;
};

/// With `target_as_parameter` the target table becomes a named leaf "target_phi", so its
/// (expected zero) gradient can be observed.
inline BoundModel bind(grad::Tape& tape, const ParamStore& params, const Tensor& target_phi, std::size_t iqe_k,
                       std::size_t iqe_l, bool target_as_parameter = false) {
  BoundModel b;
  b.phi = tape.parameter("phi", params.at("phi"));
  b.target_phi = target_as_parameter ? tape.parameter("target_phi", target_phi) : tape.constant(target_phi);
  b.w1 = tape.parameter("psi.w1", params.at("psi.w1"));
  b.b1 = tape.parameter("psi.b1", params.at("psi.b1"));
  b.w2 = tape.parameter("psi.w2", params.at("psi.w2"));
  b.b2 = tape.parameter("psi.b2", params.at("psi.b2"));
  b.raw_alpha = tape.parameter("m.raw_alpha", params.at("m.raw_alpha"));
  b.iqe_k = iqe_k;
  b.iqe_l = iqe_l;
  return b;
}

inline BoundModel bind(grad::Tape& tape, const ScrModel& model, bool target_as_parameter = false) {
  return bind(tape, model.params, model.target_phi, model.iqe_k, model.iqe_l, target_as_parameter);
}

/// psi(phi_a, phi_b): two affine layers with a rectifier in between.
inline grad::Var psi_forward(const BoundModel& m, const grad::Var& first, const grad::Var& second) {
  grad::Var h = grad::rectified_linear(grad::affine(m.w1, m.b1, grad::concat_cols(first, second)));
  return grad::affine(m.w2, m.b2, h);
}

inline grad::Var m_hat_forward(const BoundModel& m, const grad::Var& from, const grad::Var& to) {
  return grad::iqe(from, to, m.iqe_k, m.iqe_l, grad::sigmoid(m.raw_alpha));
}

// ---------------------------------------------------------------------------
// Losses

/// Row permutations that form the (x, y) pairs: one over the concatenated i/j pool for the phi
/// loss, one over the batch for the psi and upper-constraint losses.
struct Pairing {
  std::vector<std::size_t> pool;   // size 2B
  std::vector<std::size_t> batch;  // size B
};

inline Pairing make_pairing(std::size_t batch_size, std::uint64_t seed) {
  Rng rng(seed, "pairing");
  Pairing p;
  p.pool = rng.permutation(2 * batch_size);
  p.batch = rng.permutation(batch_size);
  return p;
}

inline Pairing identity_pairing(std::size_t batch_size) {
  Pairing p;
  p.pool.resize(2 * batch_size);
  p.batch.resize(batch_size);
  for (std::size_t i = 0; i < p.pool.size(); ++i) p.pool[i] = i;
  for (std::size_t i = 0; i < p.batch.size(); ++i) p.batch[i] = i;
  return p;
}

namespace detail {
template <typename F>
std::vector<std::size_t> column(const ChronoBatch& batch, F f) {
  std::vector<std::size_t> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(f(s));
  return out;
}
inline std::vector<std::size_t> permuted(const std::vector<std::size_t>& v, const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> out(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = v[perm[i]];
  return out;
}
inline void require_batch(const ChronoBatch& batch, const Pairing& pairing) {
  if (batch.empty()) throw ValidationError("loss: empty batch");
  if (pairing.batch.size() != batch.size() || pairing.pool.size() != 2 * batch.size()) {
    throw ShapeError("loss: pairing does not match the batch size");
  }
}
}  // namespace detail

/// One-step metric loss on phi:
/// mean | d(phi x, phi y) - |r_x - r_y| - gamma sg(d(phibar x', phibar y')) |^2
/// over the pool of transitions at i and at j, paired by `pairing.pool`.
inline grad::Var loss_phi(const BoundModel& m, const ChronoBatch& batch, const Pairing& pairing, double gamma) {
  detail::require_batch(batch, pairing);
  const std::size_t B = batch.size();
  std::vector<std::size_t> now, next;
  std::vector<double> reward;
  now.reserve(2 * B);
  next.reserve(2 * B);
  reward.reserve(2 * B);
  for (const auto& s : batch) {
    now.push_back(s.x_i);
    next.push_back(s.x_i_next);
    reward.push_back(s.r_i);
  }
  for (const auto& s : batch) {
    now.push_back(s.x_j);
    next.push_back(s.x_j_next);
    reward.push_back(s.r_j);
  }
  grad::Tape& t = *m.phi.tape();
  grad::Var d = grad::d_hat(grad::gather_rows(m.phi, now), grad::gather_rows(m.phi, detail::permuted(now, pairing.pool)));
  grad::Var d_next = grad::stop_gradient(grad::d_hat(grad::gather_rows(m.target_phi, next),
                                                     grad::gather_rows(m.target_phi, detail::permuted(next, pairing.pool))));
  Tensor gap(2 * B, 1);
  for (std::size_t i = 0; i < 2 * B; ++i) gap.data[i] = std::abs(reward[i] - reward[pairing.pool[i]]);
  grad::Var target = grad::add(t.constant(std::move(gap)), grad::scalar_multiply(d_next, gamma));
  return grad::mean(grad::square(grad::subtract(d, target)));
}

/// Chronological-embedding loss:
/// mean | d(psi(x_i, x_j), psi(y_i', y_j')) - |r_x - r_y| - gamma sg(d(psi(x_{i+1}, x_j), psi(y_{i'+1}, y_j'))) |^2.
/// The bootstrap side feeds target-phi embeddings through the online psi; only the first state advances.
inline grad::Var loss_psi(const BoundModel& m, const ChronoBatch& batch, const Pairing& pairing, double gamma) {
  detail::require_batch(batch, pairing);
  const std::size_t B = batch.size();
  grad::Tape& t = *m.phi.tape();
  const auto xi = detail::column(batch, [](const ChronoSample& s) { return s.x_i; });
  const auto xj = detail::column(batch, [](const ChronoSample& s) { return s.x_j; });
  const auto xi1 = detail::column(batch, [](const ChronoSample& s) { return s.x_i_next; });

  grad::Var psi = psi_forward(m, grad::gather_rows(m.phi, xi), grad::gather_rows(m.phi, xj));
  grad::Var d = grad::d_hat(psi, grad::gather_rows(psi, pairing.batch));
  grad::Var psi_next = psi_forward(m, grad::gather_rows(m.target_phi, xi1), grad::gather_rows(m.target_phi, xj));
  grad::Var d_next = grad::stop_gradient(grad::d_hat(psi_next, grad::gather_rows(psi_next, pairing.batch)));

  Tensor gap(B, 1);
  for (std::size_t i = 0; i < B; ++i) gap.data[i] = std::abs(batch[i].r_i - batch[pairing.batch[i]].r_i);
  grad::Var target = grad::add(t.constant(std::move(gap)), grad::scalar_multiply(d_next, gamma));
  return grad::mean(grad::square(grad::subtract(d, target)));
}

/// m_hat(phi x_i, phi x_j) for every sample -> [B x 1].
inline grad::Var measure(const BoundModel& m, const ChronoBatch& batch) {
  const auto xi = detail::column(batch, [](const ChronoSample& s) { return s.x_i; });
  const auto xj = detail::column(batch, [](const ChronoSample& s) { return s.x_j; });
  return m_hat_forward(m, grad::gather_rows(m.phi, xi), grad::gather_rows(m.phi, xj));
}

/// Lower constraint: mean ReLU(agg_rew - m_hat)^2.
inline grad::Var loss_low(const BoundModel& m, const ChronoBatch& batch) {
  if (batch.empty()) throw ValidationError("loss_low: empty batch");
  grad::Tape& t = *m.phi.tape();
  Tensor agg(batch.size(), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) agg.data[i] = batch[i].agg_rew;
  grad::Var mv = measure(m, batch);
  return grad::mean(grad::square(grad::rectified_linear(grad::subtract(t.constant(std::move(agg)), mv))));
}

/// Same quantity written as a masked squared error, (m - agg)^2 * [m < agg].
inline grad::Var loss_low_masked(const BoundModel& m, const ChronoBatch& batch) {
  if (batch.empty()) throw ValidationError("loss_low: empty batch");
  grad::Tape& t = *m.phi.tape();
  grad::Var mv = measure(m, batch);
  Tensor agg(batch.size(), 1), mask(batch.size(), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    agg.data[i] = batch[i].agg_rew;
    mask.data[i] = mv.value().data[i] < agg.data[i] ? 1.0 : 0.0;
  }
  grad::Var se = grad::square(grad::subtract(mv, t.constant(std::move(agg))));
  return grad::mean(grad::multiply(se, t.constant(std::move(mask))));
}

/// Upper constraint: mean ReLU(|m_hat(x_i, x_j)| - sg(d(x_i, y_i') + d(x_j, y_j') + partner))^2, where the
/// partner term is the partner's sampled return or m_hat(y_i', y_j') depending on `form`.
inline grad::Var loss_up(const BoundModel& m, const ChronoBatch& batch, const Pairing& pairing,
                         UpperBoundForm form = UpperBoundForm::kSampledReturn) {
  detail::require_batch(batch, pairing);
  const std::size_t B = batch.size();
  grad::Tape& t = *m.phi.tape();
  const auto xi = detail::column(batch, [](const ChronoSample& s) { return s.x_i; });
  const auto xj = detail::column(batch, [](const ChronoSample& s) { return s.x_j; });
  grad::Var phi_i = grad::gather_rows(m.phi, xi);
  grad::Var phi_j = grad::gather_rows(m.phi, xj);
  grad::Var mv = m_hat_forward(m, phi_i, phi_j);

  grad::Var partner;
  if (form == UpperBoundForm::kSampledReturn) {
    Tensor agg(B, 1);
    for (std::size_t i = 0; i < B; ++i) agg.data[i] = batch[pairing.batch[i]].agg_rew;
    partner = t.constant(std::move(agg));
  } else {
    partner = grad::absolute(grad::gather_rows(mv, pairing.batch));
  }
  grad::Var rhs = grad::add(grad::add(grad::d_hat(phi_i, grad::gather_rows(phi_i, pairing.batch)),
                                      grad::d_hat(phi_j, grad::gather_rows(phi_j, pairing.batch))),
                            partner);
  rhs = grad::stop_gradient(rhs);
  return grad::mean(grad::square(grad::rectified_linear(grad::subtract(grad::absolute(mv), rhs))));
}

struct LossTerms {
  grad::Var phi, psi, low, up, total;
};

/// Unweighted sum of the four representation losses.
inline LossTerms total_loss(const BoundModel& m, const ChronoBatch& batch, const Pairing& pairing, double gamma,
                            UpperBoundForm form = UpperBoundForm::kSampledReturn) {
  LossTerms l;
  l.phi = loss_phi(m, batch, pairing, gamma);
  l.psi = loss_psi(m, batch, pairing, gamma);
  l.low = loss_low(m, batch);
  l.up = loss_up(m, batch, pairing, form);
  l.total = grad::add(grad::add(l.phi, l.psi), grad::add(l.low, l.up));
  return l;
}

// ---------------------------------------------------------------------------
// Evaluation

struct MetricRecovery {
  double mae = 0.0;          // over all ordered pairs, diagonal included
  double mae_offdiag = 0.0;  // over x != y
  double rank_corr = 0.0;    // Spearman over x < y
  double max_exact = 0.0;    // largest exact distance over x != y
};

/// Average ranks (ties share the mean rank).
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

/// Learned d_hat(phi x, phi y) against an exact metric table.
inline MetricRecovery evaluate_metric_recovery(const Tensor& phi, const Matrix& exact) {
  const std::size_t n = exact.rows;
  if (phi.rows != n || exact.cols != n) throw ShapeError("evaluate_metric_recovery: state counts differ");
  auto row = [&](std::size_t s) { return Vec(phi.data.data() + s * phi.cols, phi.cols); };
  MetricRecovery out;
  std::vector<double> learned, truth;
  double total = 0.0, off = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      const double err = std::abs(d_hat(row(x), row(y)) - exact(x, y));
      total += err;
      if (x != y) {
        off += err;
        out.max_exact = std::max(out.max_exact, exact(x, y));
      }
      if (x < y) {
        learned.push_back(d_hat(row(x), row(y)));
        truth.push_back(exact(x, y));
      }
    }
  }
  out.mae = total / static_cast<double>(n * n);
  out.mae_offdiag = n > 1 ? off / static_cast<double>(n * (n - 1)) : 0.0;
  out.rank_corr = learned.size() > 1 ? spearman(learned, truth) : 1.0;
  return out;
}

/// m_hat between two states with the model's current embeddings.
inline double measure_states(const ScrModel& model, StateId from, StateId to) {
  const Tensor& phi = model.params.at("phi");
  const IqeShape shape{model.iqe_k, model.iqe_l, model.alpha()};
  return iqe(Vec(phi.data.data() + from * phi.cols, phi.cols), Vec(phi.data.data() + to * phi.cols, phi.cols), shape);
}

// ---------------------------------------------------------------------------
// Training loop

struct LossRecord {
  std::size_t step = 0;
  double loss_phi = 0.0, loss_psi = 0.0, loss_low = 0.0, loss_up = 0.0, total = 0.0;
};

struct Snapshot {
  std::size_t step = 0;
  MetricRecovery recovery;
};

struct TrainingReport {
  std::vector<LossRecord> losses;
  std::vector<Snapshot> snapshots;  // step 0 first, then every eval_every steps and the last step
  ScrModel model;
  Policy behavior;
  MetricTable exact;  // MICo fixed point under the behavior policy
};

/// Replay set for one refresh period: n trajectories from uniformly drawn start states.
inline std::vector<Trajectory> collect_replay(const TabularMdp& mdp, const Policy& behavior, std::size_t n,
                                              std::size_t horizon, std::uint64_t seed, std::size_t epoch) {
  Rng rng(seed, "replay", epoch);
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const StateId start = static_cast<StateId>(rng.index(mdp.n_states));
    out.push_back(sample_trajectory(mdp, behavior, start, horizon, rng.next()));
  }
  return out;
}

/// epsilon-greedy around the value-iteration optimum.
inline Policy default_behavior_policy(const TabularMdp& mdp, double eps) {
  return epsilon_greedy(value_iteration(mdp).greedy, eps);
}

/// Representation learning loop: sample batch, total loss, backward, optimizer step, EMA target.
inline TrainingReport train(const TabularMdp& mdp, const Policy& behavior, const TrainerConfig& cfg,
                            std::uint64_t seed) {
  validate(mdp);
  validate(cfg);
  validate(behavior, mdp.n_states, mdp.n_actions);
  TrainingReport report;
  report.behavior = behavior;
  report.exact = mico_fixed_point(mdp, behavior);
  report.model = init_model(mdp.n_states, cfg, seed);
  ScrModel& model = report.model;
  report.snapshots.push_back({0, evaluate_metric_recovery(model.params.at("phi"), report.exact.values)});

  const std::size_t k_max = cfg.resolved_k_max();
  std::vector<Trajectory> replay;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    if ((step - 1) % cfg.replay_refresh == 0) {
      replay = collect_replay(mdp, behavior, cfg.n_trajectories, cfg.horizon, seed, (step - 1) / cfg.replay_refresh);
    }
    const ChronoBatch batch =
        sample_chrono_batch(replay, cfg.batch, cfg.k_min, k_max, mdp.gamma, Rng(seed, "batch", step).next());
    const Pairing pairing = make_pairing(cfg.batch, Rng(seed, "pairing", step).next());

    grad::Tape tape;
    const BoundModel bound = bind(tape, model);
    const LossTerms loss = total_loss(bound, batch, pairing, mdp.gamma, cfg.l_up_form);
    LossRecord rec{step, loss.phi.item(), loss.psi.item(), loss.low.item(), loss.up.item(), loss.total.item()};
    if (!std::isfinite(rec.total) || rec.total > kDivergenceThreshold) {
      throw DivergenceError("train: total loss diverged at step " + std::to_string(step), step);
    }
    report.losses.push_back(rec);
    const grad::Gradients grads = tape.backward(loss.total);
    if (cfg.optimizer == OptimizerKind::kAdam) {
      adam_step(model.params, grads, cfg.adam);
    } else {
      sgd_step(model.params, grads, cfg.adam.lr);
    }
    ema_update(model.target_phi, model.params.at("phi"), cfg.alpha_phi);

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      report.snapshots.push_back({step, evaluate_metric_recovery(model.params.at("phi"), report.exact.values)});
    }
  }
  return report;
}

struct ConstraintReport {
  std::size_t samples = 0;
  std::size_t lower_violations = 0;  // m_hat below the behavior policy's conditioned return
  std::size_t upper_violations = 0;  // |m_hat(x)| above d(x_i, y_i) + |m_hat(y)| + d(x_j, y_j), exact d
  double tolerance = 0.01;
  double lower_rate() const { return samples ? static_cast<double>(lower_violations) / static_cast<double>(samples) : 0.0; }
  double upper_rate() const { return samples ? static_cast<double>(upper_violations) / static_cast<double>(samples) : 0.0; }
};

/// Both constraints on a held-out ChronoBatch drawn from fresh behavior rollouts. The lower check
/// compares m_hat with the exact endpoint-conditioned return over the sampled gap; the upper check
/// pairs samples by a seeded permutation and uses the exact metric for the distance terms.
inline ConstraintReport evaluate_constraints(const TabularMdp& mdp, const ScrModel& model, const Policy& behavior,
                                             const Matrix& exact, const TrainerConfig& cfg, std::size_t samples,
                                             std::uint64_t seed, double tolerance = 0.01) {
  Rng rng(seed, "held_out");
  const auto trajs = collect_replay(mdp, behavior, cfg.n_trajectories, cfg.horizon, rng.next(), 0);
  const ChronoBatch batch = sample_chrono_batch(trajs, samples, cfg.k_min, cfg.resolved_k_max(), mdp.gamma, rng.next());
  const auto perm = rng.permutation(samples);
  ConstraintReport rep;
  rep.samples = samples;
  rep.tolerance = tolerance;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const ChronoSample& x = batch[b];
    const ChronoSample& y = batch[perm[b]];
    const double mx = measure_states(model, x.x_i, x.x_j);
    const double my = measure_states(model, y.x_i, y.x_j);
    if (check_lower_bound(mdp, behavior, x.x_i, x.x_j, x.step_gap, mx).gap < -tolerance) ++rep.lower_violations;
    if (check_upper_bound(mx, exact(x.x_i, y.x_i), exact(x.x_j, y.x_j), my).slack < -tolerance) ++rep.upper_violations;
  }
  return rep;
}

}  // namespace scr
