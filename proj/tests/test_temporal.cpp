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

#include "scr/temporal.hpp"
#include "scr/verify/oracles.hpp"
#include "scr/verify/suites.hpp"

namespace scr {
namespace {

// Every state jumps to either state with probability 1/2.
TabularMdp mixing_chain() {
  TabularMdp mdp(2, 1, 0.9);
  for (StateId s = 0; s < 2; ++s) mdp.p(s, 0, 0) = mdp.p(s, 0, 1) = 0.5;
  mdp.reward(0, 0) = 1.0;
  mdp.reward(1, 0) = -1.0;
  return mdp;
}

// Action 0 keeps state 0 with reward 1; action 1 drops into the absorbing state 1 with reward 0.
TabularMdp stay_or_leave() {
  TabularMdp mdp(2, 2, 0.9);
  mdp.p(0, 0, 0) = 1.0;
  mdp.p(0, 1, 1) = 1.0;
  mdp.p(1, 0, 1) = mdp.p(1, 1, 1) = 1.0;
  mdp.reward(0, 0) = 1.0;
  return mdp;
}

TEST(EndpointProbability, Examples) {
  const TabularMdp chain = verify::reward_chain();
  const Policy pi = uniform_policy(3, 1);
  EXPECT_EQ(endpoint_probability(chain, pi, 1, 1, 0), 1.0);
  EXPECT_EQ(endpoint_probability(chain, pi, 0, 1, 0), 0.0);
  EXPECT_EQ(endpoint_probability(chain, pi, 0, 2, 2), 1.0);
  EXPECT_EQ(endpoint_probability(chain, pi, 0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(endpoint_probability(mixing_chain(), uniform_policy(2, 1), 0, 1, 1), 0.5);
  EXPECT_THROW(endpoint_probability(chain, pi, 3, 0, 1), ValidationError);
}

TEST(EndpointProbability, SumsToOne) {
  const TabularMdp mdp = random_mdp(6, 2, 3, 0.9, 12);
  const Policy pi = uniform_policy(6, 2);
  for (std::size_t k = 0; k < 6; ++k) {
    for (StateId x = 0; x < 6; ++x) {
      double total = 0.0;
      for (StateId y = 0; y < 6; ++y) total += endpoint_probability(mdp, pi, x, y, k);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(ConditionedReturn, ZeroStepsIsOwnReward) {
  const auto r = conditioned_return(verify::reward_chain(), uniform_policy(3, 1), 1, 1, 0);
  EXPECT_EQ(r.value, 2.0);
  EXPECT_EQ(r.endpoint_prob, 1.0);
  EXPECT_EQ(r.k, 0u);
}

TEST(ConditionedReturn, DeterministicChain) {
  EXPECT_EQ(conditioned_return(verify::reward_chain(), uniform_policy(3, 1), 0, 2, 2).value, 2.75);
}

TEST(ConditionedReturn, UnreachableEndpointRaises) {
  EXPECT_THROW(conditioned_return(verify::reward_chain(), uniform_policy(3, 1), 2, 0, 3), UnreachableEndpoint);
  EXPECT_THROW(conditioned_return(verify::reward_chain(), uniform_policy(3, 1), 0, 2, 1), UnreachableEndpoint);
}

TEST(ConditionedReturn, ZeroDiscountIsFirstReward) {
  TabularMdp mdp = random_mdp(5, 2, 3, 0.0, 3, -1, 1);
  const Policy pi = uniform_policy(5, 2);
  const auto r = policy_reward(mdp, pi);
  for (StateId x = 0; x < 5; ++x)
    for (StateId y = 0; y < 5; ++y) {
      if (endpoint_probability(mdp, pi, x, y, 3) == 0.0) continue;
      EXPECT_NEAR(conditioned_return(mdp, pi, x, y, 3).value, r[x], 1e-15);
    }
}

TEST(ConditionedReturn, BridgeOverMixingChain) {
  // x=0 -> y=1 in two steps: middle state is 0 or 1 with equal odds, so the middle reward averages to 0
  const auto r = conditioned_return(mixing_chain(), uniform_policy(2, 1), 0, 1, 2);
  EXPECT_NEAR(r.value, 1.0 + 0.9 * 0.0 + 0.81 * -1.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.endpoint_prob, 0.5);
}

TEST(ConditionedReturn, IgnoresStatesOutsideTheReachableSet) {
  TabularMdp mdp = verify::reward_chain();
  const double before = conditioned_return(mdp, uniform_policy(3, 1), 1, 2, 1).value;
  mdp.reward(0, 0) = 1000.0;  // state 0 is not reachable from state 1
  EXPECT_EQ(conditioned_return(mdp, uniform_policy(3, 1), 1, 2, 1).value, before);
}

TEST(ConditionedReturn, MatchesPathEnumeration) {
  const auto r = verify::conditioned_return_suite();
  EXPECT_TRUE(r.passed()) << (r.messages.empty() ? "" : r.messages[0]);
  EXPECT_GT(r.cases, 1000u);
}

TEST(MStar, SingleActionEqualsOnlyPolicy) {
  const TabularMdp chain = verify::reward_chain();
  EXPECT_EQ(m_star(chain, 0, 2, 2).value, conditioned_return(chain, uniform_policy(3, 1), 0, 2, 2).value);
}

TEST(MStar, DominantActionBeatsUniform) {
  TabularMdp mdp = random_mdp(5, 2, 3, 0.9, 21, 0.0, 1.0);
  for (StateId s = 0; s < 5; ++s) {
    for (StateId t = 0; t < 5; ++t) mdp.p(s, 1, t) = mdp.p(s, 0, t);
    mdp.reward(s, 1) = mdp.reward(s, 0) + 0.5;
  }
  const Policy uni = uniform_policy(5, 2);
  std::size_t compared = 0;
  for (std::size_t k = 1; k <= 4; ++k)
    for (StateId x = 0; x < 5; ++x)
      for (StateId y = 0; y < 5; ++y) {
        if (endpoint_probability(mdp, uni, x, y, k) == 0.0) continue;
        EXPECT_GE(m_star(mdp, x, y, k).value, conditioned_return(mdp, uni, x, y, k).value);
        ++compared;
      }
  EXPECT_GT(compared, 20u);
}

TEST(MStar, EndpointUnreachableUnderOptimumRaises) {
  const TabularMdp mdp = stay_or_leave();
  EXPECT_GT(endpoint_probability(mdp, uniform_policy(2, 2), 0, 1, 1), 0.0);
  EXPECT_THROW(m_star(mdp, 0, 1, 1), UnreachableEndpoint);
}

TEST(LowerBound, Examples) {
  const TabularMdp chain = verify::reward_chain();
  const Policy pi = uniform_policy(3, 1);
  const auto exact = check_lower_bound(chain, pi, 0, 2, 2, 2.75);
  EXPECT_TRUE(exact.satisfied);
  EXPECT_EQ(exact.gap, 0.0);
  const auto low = check_lower_bound(chain, pi, 0, 2, 2, 1.75);
  EXPECT_FALSE(low.satisfied);
  EXPECT_EQ(low.gap, -1.0);
}

TEST(LowerBound, PolicySweepReportsRates) {
  const TabularMdp mdp = random_mdp(5, 2, 3, 0.9, 4);
  const auto sweep = lower_bound_policy_sweep(mdp, 10, 3, 1);
  ASSERT_EQ(sweep.size(), 10u);
  for (const auto& e : sweep) {
    EXPECT_EQ(e.checked + e.skipped, 3u * 5u * 5u);
    EXPECT_LE(e.violations, e.checked);
    EXPECT_GE(e.violation_rate, 0.0);
    EXPECT_LE(e.violation_rate, 1.0);
  }
  const auto again = lower_bound_policy_sweep(mdp, 10, 3, 1);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(again[i].violations, sweep[i].violations);
}

TEST(LowerBound, OptimalPolicyNeverViolatesAgainstItself) {
  // a one-action MDP has a single policy, which is optimal
  const auto sweep = lower_bound_policy_sweep(verify::reward_chain(), 3, 4, 0);
  for (const auto& e : sweep) EXPECT_EQ(e.violations, 0u);
}

TEST(UpperBound, Examples) {
  const auto zero = check_upper_bound(0, 0, 0, 0);
  EXPECT_TRUE(zero.satisfied);
  EXPECT_EQ(zero.slack, 0.0);
  const auto bad = check_upper_bound(5, 1, 1, 1);
  EXPECT_FALSE(bad.satisfied);
  EXPECT_EQ(bad.slack, -2.0);
  EXPECT_TRUE(check_upper_bound(-3.5, 0, 0, 3.5).satisfied);
  EXPECT_THROW(check_upper_bound(0, -1, 0, 0), ValidationError);
}

}  // namespace
}  // namespace scr
