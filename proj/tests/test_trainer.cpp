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

#include <gtest/gtest.h>

#include <cmath>

#include "scr/trainer.hpp"
#include "scr/verify/suites.hpp"

namespace scr {
namespace {

using grad::Tape;

// A one-dimensional model (k = l = 1) whose psi is relu of its first input: hidden 2,
// w1 = identity, w2 = (1, 0)^T, zero biases.
ScrModel tiny_model(std::vector<double> phi_values) {
  TrainerConfig cfg;
  cfg.n_dim = 1;
  cfg.iqe_k = 1;
  cfg.iqe_l = 1;
  cfg.hidden = 2;
  cfg.horizon = 4;
  ScrModel m = init_model(phi_values.size(), cfg, 0);
  Tensor& phi = m.params.at("phi");
  for (std::size_t s = 0; s < phi_values.size(); ++s) phi.data[s] = phi_values[s];
  m.target_phi = phi;
  Tensor& w1 = m.params.at("psi.w1");
  w1 = Tensor(2, 2, 0.0);
  w1(0, 0) = w1(1, 1) = 1.0;
  Tensor& w2 = m.params.at("psi.w2");
  w2 = Tensor(2, 1, 0.0);
  w2(0, 0) = 1.0;
  return m;
}

ChronoSample sample(StateId xi, StateId xj, double r_i, double r_j, double agg, StateId xi1, StateId xj1) {
  ChronoSample s;
  s.x_i = xi;
  s.x_j = xj;
  s.r_i = r_i;
  s.r_j = r_j;
  s.agg_rew = agg;
  s.x_i_next = xi1;
  s.x_j_next = xj1;
  return s;
}

struct Draw {
  ChronoBatch batch;
  Pairing pairing;
  double gamma;
};

Draw draw_batch(const verify::GradientFixture& f, std::uint64_t seed) {
  return {sample_chrono_batch(f.trajectories, f.config.batch, 1, f.config.resolved_k_max(), f.mdp.gamma, seed),
          make_pairing(f.config.batch, seed), f.mdp.gamma};
}

double hand_d_hat(double a, double b) { return std::sqrt(a * a + b * b - a * b); }

TEST(LossPhi, SinglePairZeroDiscount) {
  ScrModel m = tiny_model({0.5, 2.0});
  Tape t;
  const BoundModel b = bind(t, m);
  const ChronoBatch batch{sample(0, 1, 1.0, 0.0, 1.0, 0, 1)};
  Pairing swap;
  swap.pool = {1, 0};
  swap.batch = {0};
  const double d = hand_d_hat(0.5, 2.0);
  EXPECT_NEAR(loss_phi(b, batch, swap, 0.0).item(), (d - 1.0) * (d - 1.0), 1e-15);
}

TEST(LossPhi, IdentityPairingDropsRewardTerm) {
  ScrModel m = tiny_model({0.5, 2.0});
  Tape t;
  const BoundModel b = bind(t, m);
  const ChronoBatch batch{sample(0, 1, 1.0, 0.0, 1.0, 0, 1)};
  // self-pairs: d_hat(a, a) = |a| and the target is 0 when gamma = 0
  EXPECT_NEAR(loss_phi(b, batch, identity_pairing(1), 0.0).item(), 0.5 * (0.25 + 4.0), 1e-15);
}

TEST(LossPhi, ZeroAtTheFixedPointOfAZeroMetric) {
  // equal rewards everywhere: the MICo table is 0 and phi = 0 realizes it
  TabularMdp mdp = verify::reward_chain();
  for (StateId s = 0; s < 3; ++s) mdp.reward(s, 0) = 0.7;
  const auto trajs = std::vector<Trajectory>{sample_trajectory(mdp, uniform_policy(3, 1), 0, 6, 0)};
  const ChronoBatch batch = sample_chrono_batch(trajs, 8, 1, 3, mdp.gamma, 1);
  ScrModel m = tiny_model({0.0, 0.0, 0.0});
  Tape t;
  EXPECT_EQ(loss_phi(bind(t, m), batch, make_pairing(8, 2), mdp.gamma).item(), 0.0);
}

TEST(LossPsi, ZeroOutputWithSelfPairingAndNoDiscount) {
  ScrModel m = tiny_model({0.5, 2.0});
  m.params.at("psi.w2") = Tensor(2, 1, 0.0);
  Tape t;
  const ChronoBatch batch{sample(0, 1, 1.0, 0.0, 1.0, 1, 1), sample(1, 0, 0.0, 1.0, 0.0, 1, 1)};
  EXPECT_EQ(loss_psi(bind(t, m), batch, identity_pairing(2), 0.0).item(), 0.0);
}

TEST(LossPsi, HandForwardPass) {
  // psi(a, b) = relu(a), so psi values are phi(x_i) clipped at 0
  ScrModel m = tiny_model({0.5, 2.0, -1.0});
  const ChronoBatch batch{sample(0, 2, 1.0, 0.0, 1.0, 1, 2), sample(1, 2, 0.25, 0.0, 0.0, 2, 2)};
  Pairing swap;
  swap.pool = {0, 1, 2, 3};
  swap.batch = {1, 0};
  const double gamma = 0.5;
  const double d = hand_d_hat(0.5, 2.0);             // psi(x0) vs psi(x1)
  const double d_next = hand_d_hat(2.0, 0.0);        // advanced first states: x1 vs x2 -> relu(-1) = 0
  const double residual = d - 0.75 - gamma * d_next;  // |1 - 0.25| = 0.75
  Tape t;
  EXPECT_NEAR(loss_psi(bind(t, m), batch, swap, gamma).item(), residual * residual, 1e-15);
}

TEST(LossLow, InactiveWhenMeasureDominates) {
  ScrModel m = tiny_model({0.0, 3.0});
  Tape t;
  const ChronoBatch batch{sample(0, 1, 0, 0, 2.5, 1, 1)};  // m_hat(0 -> 1) = 3
  EXPECT_EQ(loss_low(bind(t, m), batch).item(), 0.0);
}

TEST(LossLow, ContributionFour) {
  ScrModel m = tiny_model({1.0, 1.0});
  Tape t;
  const ChronoBatch batch{sample(0, 1, 0, 0, 2.0, 1, 1)};  // m_hat = 0
  EXPECT_EQ(loss_low(bind(t, m), batch).item(), 4.0);
}

TEST(LossLow, ReluAndMaskAgree) {
  Rng rng(5, "low forms");
  for (int draw = 0; draw < 20; ++draw) {
    const auto f = verify::gradient_fixture(draw);
    const ScrModel m = verify::random_model(f, rng);
    const Draw d = draw_batch(f, draw);
    Tape t;
    const BoundModel b = bind(t, m);
    EXPECT_NEAR(loss_low(b, d.batch).item(), loss_low_masked(b, d.batch).item(), 1e-12);
  }
}

TEST(LossUp, InactiveWithinBound) {
  ScrModel m = tiny_model({0.0, 1.0});
  Tape t;
  const ChronoBatch batch{sample(0, 1, 0, 0, 5.0, 1, 1)};
  EXPECT_EQ(loss_up(bind(t, m), batch, identity_pairing(1)).item(), 0.0);
}

TEST(LossUp, SelfPairingBoundary) {
  ScrModel m = tiny_model({0.0, 0.0});
  Tape t;
  const ChronoBatch batch{sample(0, 1, 0, 0, 0.0, 1, 1)};
  EXPECT_EQ(loss_up(bind(t, m), batch, identity_pairing(1)).item(), 0.0);
}

TEST(LossUp, ContributionFour) {
  // m_hat(0 -> 1) = 3; rhs = |phi0| + |phi1| + agg = 0 + 3 - 2 = 1
  ScrModel m = tiny_model({0.0, 3.0});
  Tape t;
  const ChronoBatch batch{sample(0, 1, 0, 0, -2.0, 1, 1)};
  EXPECT_EQ(loss_up(bind(t, m), batch, identity_pairing(1)).item(), 4.0);
}

TEST(LossUp, LearnedMeasureForm) {
  // partner term is |m_hat| of the partner, here the sample itself: rhs = 0 + 3 + 3
  ScrModel m = tiny_model({0.0, 3.0});
  Tape t;
  const ChronoBatch batch{sample(0, 1, 0, 0, -100.0, 1, 1)};
  EXPECT_EQ(loss_up(bind(t, m), batch, identity_pairing(1), UpperBoundForm::kLearnedMeasure).item(), 0.0);
}

TEST(TotalLoss, SumOfParts) {
  Rng rng(6, "total");
  for (int draw = 0; draw < 10; ++draw) {
    const auto f = verify::gradient_fixture(draw);
    const ScrModel m = verify::random_model(f, rng);
    const Draw d = draw_batch(f, draw);
    Tape t;
    const BoundModel b = bind(t, m);
    const LossTerms l = total_loss(b, d.batch, d.pairing, d.gamma);
    EXPECT_NEAR(l.total.item(), l.phi.item() + l.psi.item() + l.low.item() + l.up.item(), 1e-12);
    Tape t2;
    const BoundModel b2 = bind(t2, m);
    EXPECT_NEAR(l.low.item(), loss_low(b2, d.batch).item(), 1e-12);
    EXPECT_GE(l.total.item(), 0.0);
  }
}

TEST(TotalLoss, ZeroWhenEveryPartIsZero) {
  ScrModel m = tiny_model({0.0, 0.0});
  m.params.at("psi.w2") = Tensor(2, 1, 0.0);
  Tape t;
  const ChronoBatch batch{sample(0, 1, 0, 0, 0.0, 1, 1)};
  EXPECT_EQ(total_loss(bind(t, m), batch, identity_pairing(1), 0.9).total.item(), 0.0);
}

TEST(Ema, Examples) {
  Tensor target(1, 1, 0.0);
  ema_update(target, Tensor(1, 1, 1.0), 0.05);
  EXPECT_DOUBLE_EQ(target.data[0], 0.05);
  Tensor copy(1, 2, 3.0);
  ema_update(copy, Tensor(1, 2, -1.0), 1.0);
  EXPECT_EQ(copy.data, (std::vector<double>{-1.0, -1.0}));
  Tensor bad(2, 1);
  EXPECT_THROW(ema_update(bad, copy, 0.5), ShapeError);
}

TEST(Ema, GeometricDecayTowardSource) {
  Tensor target(1, 1, 0.0);
  const Tensor source(1, 1, 1.0);
  for (int t = 1; t <= 50; ++t) {
    ema_update(target, source, 0.05);
    EXPECT_NEAR(1.0 - target.data[0], std::pow(0.95, t), 1e-14);
  }
}

TEST(MetricRecovery, MatchingEmbeddings) {
  Tensor phi(3, 2);
  phi.data = {0.0, 0.0, 1.0, 0.0, 0.0, 2.0};
  Matrix exact(3, 3);
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 0; y < 3; ++y)
      exact(x, y) = d_hat(Vec(&phi.data[2 * x], 2), Vec(&phi.data[2 * y], 2));
  const auto r = evaluate_metric_recovery(phi, exact);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.rank_corr, 1.0);
  EXPECT_DOUBLE_EQ(r.max_exact, std::sqrt(5.0));
  EXPECT_THROW(evaluate_metric_recovery(phi, Matrix(2, 2)), ShapeError);
}

TEST(MetricRecovery, SpearmanHandlesTiesAndReversal) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {30, 20, 10}), -1.0);
  EXPECT_EQ(ranks({5, 1, 5, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
  EXPECT_EQ(spearman({1, 1, 1}, {1, 2, 3}), 0.0);
}

TrainerConfig small_config() {
  TrainerConfig cfg;
  cfg.n_dim = 4;
  cfg.iqe_k = 2;
  cfg.iqe_l = 2;
  cfg.hidden = 8;
  cfg.batch = 16;
  cfg.steps = 60;
  cfg.horizon = 10;
  cfg.n_trajectories = 4;
  cfg.replay_refresh = 25;
  cfg.eval_every = 20;
  return cfg;
}

TEST(Train, SameSeedSameReport) {
  const TabularMdp mdp = random_mdp(4, 2, 2, 0.9, 3);
  const Policy pi = default_behavior_policy(mdp, 0.3);
  const auto a = train(mdp, pi, small_config(), 11);
  const auto b = train(mdp, pi, small_config(), 11);
  ASSERT_EQ(a.losses.size(), 60u);
  for (std::size_t i = 0; i < a.losses.size(); ++i) {
    EXPECT_EQ(a.losses[i].total, b.losses[i].total);
    EXPECT_EQ(a.losses[i].loss_phi, b.losses[i].loss_phi);
  }
  EXPECT_EQ(a.model.params, b.model.params);
  EXPECT_EQ(a.model.target_phi, b.model.target_phi);
  const auto c = train(mdp, pi, small_config(), 12);
  EXPECT_NE(a.losses.back().total, c.losses.back().total);
}

TEST(Train, SnapshotSchedule) {
  const TabularMdp mdp = random_mdp(4, 2, 2, 0.9, 3);
  TrainerConfig cfg = small_config();
  cfg.steps = 50;
  const auto r = train(mdp, default_behavior_policy(mdp, 0.3), cfg, 1);
  std::vector<std::size_t> steps;
  for (const auto& s : r.snapshots) steps.push_back(s.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 20, 40, 50}));
}

TEST(Train, ZeroStepsGivesInitialSnapshotOnly) {
  const TabularMdp mdp = random_mdp(4, 2, 2, 0.9, 3);
  TrainerConfig cfg = small_config();
  cfg.steps = 0;
  const auto r = train(mdp, default_behavior_policy(mdp, 0.3), cfg, 1);
  EXPECT_TRUE(r.losses.empty());
  ASSERT_EQ(r.snapshots.size(), 1u);
  EXPECT_EQ(r.snapshots[0].step, 0u);
  EXPECT_EQ(r.model.params, init_model(4, cfg, 1).params);
}

TEST(Train, ZeroRewardMdpShrinksDistances) {
  TabularMdp mdp = random_mdp(4, 2, 2, 0.9, 8, 0.0, 0.0);
  TrainerConfig cfg = small_config();
  cfg.steps = 400;
  cfg.phi_init_scale = 1.0;
  cfg.adam.lr = 3e-3;
  const auto r = train(mdp, default_behavior_policy(mdp, 0.3), cfg, 2);
  EXPECT_LT(r.losses.back().total, 0.25 * r.losses.front().total);
  // exact metric is 0, so mae is the mean learned distance
  EXPECT_LT(r.snapshots.back().recovery.mae, 0.5 * r.snapshots.front().recovery.mae);
}

TEST(Train, DivergenceGuard) {
  const TabularMdp mdp = random_mdp(4, 2, 2, 0.9, 3, -5.0, 5.0);
  TrainerConfig cfg = small_config();
  cfg.steps = 200;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.adam.lr = 1e4;
  EXPECT_THROW(train(mdp, default_behavior_policy(mdp, 0.3), cfg, 1), DivergenceError);
}

TEST(Train, RejectsInvalidConfig) {
  const TabularMdp mdp = random_mdp(4, 2, 2, 0.9, 3);
  const Policy pi = default_behavior_policy(mdp, 0.3);
  TrainerConfig cfg = small_config();
  cfg.n_dim = 5;
  EXPECT_THROW(train(mdp, pi, cfg, 0), ValidationError);
  cfg = small_config();
  cfg.k_min = 4;
  cfg.k_max = 2;
  EXPECT_THROW(train(mdp, pi, cfg, 0), ValidationError);
  cfg = small_config();
  cfg.alpha_phi = 0.0;
  EXPECT_THROW(train(mdp, pi, cfg, 0), ValidationError);
  EXPECT_THROW(train(mdp, uniform_policy(3, 2), small_config(), 0), ShapeError);
}

TEST(Train, DefaultStepRange) {
  TrainerConfig cfg;
  cfg.horizon = 50;
  EXPECT_EQ(cfg.resolved_k_max(), 10u);
  cfg.horizon = 12;
  EXPECT_EQ(cfg.resolved_k_max(), 6u);
  cfg.k_max = 3;
  EXPECT_EQ(cfg.resolved_k_max(), 3u);
}

TEST(Constraints, RatesAreDeterministicFractions) {
  const TabularMdp mdp = random_mdp(4, 2, 2, 0.9, 3);
  const Policy pi = default_behavior_policy(mdp, 0.3);
  const auto r = train(mdp, pi, small_config(), 4);
  const auto a = evaluate_constraints(mdp, r.model, pi, r.exact.values, small_config(), 300, 9);
  const auto b = evaluate_constraints(mdp, r.model, pi, r.exact.values, small_config(), 300, 9);
  EXPECT_EQ(a.samples, 300u);
  EXPECT_EQ(a.lower_violations, b.lower_violations);
  EXPECT_EQ(a.upper_violations, b.upper_violations);
  EXPECT_GE(a.lower_rate(), 0.0);
  EXPECT_LE(a.upper_rate(), 1.0);
}

TEST(Constraints, HugeMeasureSatisfiesLowerAndBreaksUpper) {
  // m_hat is 100 between distinct states and 0 on the diagonal; every return is negative
  const TabularMdp mdp = random_mdp(4, 2, 2, 0.9, 3, -1.0, -0.5);
  const Policy pi = default_behavior_policy(mdp, 0.3);
  TrainerConfig cfg = small_config();
  cfg.iqe_k = 1;
  cfg.iqe_l = 4;
  ScrModel m = init_model(4, cfg, 0);
  Tensor& phi = m.params.at("phi");
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t c = 0; c < 4; ++c) phi(s, c) = (c == s) ? 100.0 : 0.0;
  const Matrix exact = mico_fixed_point(mdp, pi).values;
  const auto rep = evaluate_constraints(mdp, m, pi, exact, cfg, 200, 1);
  EXPECT_EQ(rep.lower_violations, 0u);
  EXPECT_GT(rep.upper_violations, 0u);
}

}  // namespace
}  // namespace scr
