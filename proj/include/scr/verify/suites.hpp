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

// Property and oracle suites shared by `scr check`, the acceptance binary, and the unit tests.
// Each suite is seeded, counts the cases it ran and the ones that broke a property, and keeps the
// first few failure descriptions.

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "scr/distances.hpp"
#include "scr/exact_metrics.hpp"
#include "scr/gradcheck.hpp"
#include "scr/io.hpp"
#include "scr/mdp.hpp"
#include "scr/rng.hpp"
#include "scr/temporal.hpp"
#include "scr/trainer.hpp"
#include "scr/transport.hpp"
#include "scr/verify/oracles.hpp"

namespace scr::verify {

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::map<std::string, std::size_t> violations;  // property -> count
  std::vector<std::string> messages;              // first few failures
  std::string note;                               // summary line, printed on success too
  std::string artifact;                           // optional CSV the suite produced
  double seconds = 0.0;

  bool passed() const { return cases > 0 && failures == 0; }

  void fail(const std::string& property, const std::string& message) {
    ++failures;
    ++violations[property];
    if (messages.size() < 5) messages.push_back(property + ": " + message);
  }
  /// Counts a failure against `property` when `ok` is false.
  void expect(bool ok, const std::string& property, const std::string& message = {}) {
    if (!ok) fail(property, message);
  }
};

namespace detail {
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline std::vector<double> random_vector(Rng& rng, std::size_t dim, double lo, double hi) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline std::string describe(double got, double want) {
  std::ostringstream os;
  os.precision(17);
  os << "got " << got << ", want " << want;
  return os.str();
}
}  // namespace detail

using DistanceFn = std::function<double(Vec, Vec)>;

inline constexpr double kTriangleSlack = 1e-9;

// ---------------------------------------------------------------------------
// distances

/// Non-negativity, exact symmetry, triangle inequality within 1e-9, and self-distance equal to
/// the Euclidean norm within 1e-12, on random triples in [-10, 10]^dim.
inline SuiteResult diffuse_metric_suite(const DistanceFn& d = [](Vec a, Vec b) { return d_hat(a, b); },
                                        std::size_t triples = 100000, std::size_t dim = 16,
                                        std::uint64_t seed = 1) {
  detail::Stopwatch clock;
  SuiteResult res;
  res.name = "diffuse_metric";
  Rng rng(seed, "diffuse_metric_suite");
  for (std::size_t t = 0; t < triples; ++t) {
    const auto a = detail::random_vector(rng, dim, -10.0, 10.0);
    const auto b = detail::random_vector(rng, dim, -10.0, 10.0);
    const auto c = detail::random_vector(rng, dim, -10.0, 10.0);
    const double ab = d(a, b), ba = d(b, a), bc = d(b, c), ac = d(a, c);
    ++res.cases;
    res.expect(ab >= 0.0 && bc >= 0.0 && ac >= 0.0, "non_negativity", "triple " + std::to_string(t));
    res.expect(ab == ba, "symmetry", "triple " + std::to_string(t) + ": " + detail::describe(ab, ba));
    res.expect(ac <= ab + bc + kTriangleSlack, "triangle", "triple " + std::to_string(t));
    const double self = d(a, a);
    double sq = 0.0;
    for (double x : a) sq += x * x;
    const double norm = std::sqrt(sq);
    res.expect(std::abs(self - norm) <= 1e-12, "self_distance",
               "triple " + std::to_string(t) + ": " + detail::describe(self, norm));
  }
  res.seconds = clock.seconds();
  return res;
}

/// Zero self-distance, non-negativity and triangle inequality for IQE on random triples, plus
/// evidence of asymmetry: some pair with |d(a,b) - d(b,a)| > 0.1.
inline SuiteResult iqe_suite(std::size_t triples = 100000, std::size_t k = 4, std::size_t l = 4,
                             std::uint64_t seed = 2) {
  detail::Stopwatch clock;
  SuiteResult res;
  res.name = "iqe_quasimetric";
  Rng rng(seed, "iqe_suite");
  double max_asym = 0.0;
  for (std::size_t t = 0; t < triples; ++t) {
    const IqeShape shape{k, l, rng.uniform()};
    const auto a = detail::random_vector(rng, k * l, -10.0, 10.0);
    const auto b = detail::random_vector(rng, k * l, -10.0, 10.0);
    const auto c = detail::random_vector(rng, k * l, -10.0, 10.0);
    const double ab = iqe(a, b, shape), ba = iqe(b, a, shape), bc = iqe(b, c, shape), ac = iqe(a, c, shape);
    ++res.cases;
    res.expect(iqe(a, a, shape) == 0.0, "zero_self_distance", "triple " + std::to_string(t));
    res.expect(ab >= 0.0 && bc >= 0.0 && ac >= 0.0, "non_negativity", "triple " + std::to_string(t));
    res.expect(ac <= ab + bc + kTriangleSlack, "triangle", "triple " + std::to_string(t));
    max_asym = std::max(max_asym, std::abs(ab - ba));
  }
  res.expect(max_asym > 0.1, "asymmetry", "largest |d(a,b) - d(b,a)| = " + format_real(max_asym));
  res.seconds = clock.seconds();
  return res;
}

// ---------------------------------------------------------------------------
// exact_metrics

struct ContractionOptions {
  std::size_t instances = 50;
  std::size_t max_states = 20;
  std::size_t n_actions = 3;
  std::size_t support = 3;
  std::uint64_t seed = 3;
};

/// For seeded random MDPs: every MICo and bisimulation iterate contracts by gamma (+1e-12),
/// reaches residual <= 1e-10 within default_max_iter, the tables are symmetric and
/// non-negative, and bisim <= MICo entrywise (+1e-9). The artifact lists every residual.
inline SuiteResult contraction_suite(const ContractionOptions& opt = {}) {
  detail::Stopwatch clock;
  SuiteResult res;
  res.name = "contraction";
  std::ostringstream csv;
  csv << "instance,n_states,gamma,metric,iteration,residual\n";
  const double gammas[] = {0.5, 0.9, 0.95};
  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    Rng rng(opt.seed, "contraction_suite", inst);
    const std::size_t n = 2 + static_cast<std::size_t>(rng.index(opt.max_states - 1));
    const double gamma = gammas[inst % 3];
    const TabularMdp mdp = random_mdp(n, opt.n_actions, opt.support, gamma, rng.next());
    const Policy pi = random_policy(n, opt.n_actions, rng);
    const std::string tag = "instance " + std::to_string(inst);

    std::map<std::string, MetricTable> tables;
    for (const std::string metric : {"mico", "bisim"}) {
      ++res.cases;
      MetricTable t;
      try {
        t = metric == "mico" ? mico_fixed_point(mdp, pi) : bisim_fixed_point(mdp, pi);
      } catch (const ConvergenceError& e) {
        res.fail("convergence", tag + " " + metric + ": " + e.what());
        continue;
      }
      for (std::size_t it = 0; it < t.residuals.size(); ++it) {
        csv << inst << ',' << n << ',' << format_real(gamma) << ',' << metric << ',' << it + 1 << ','
            << format_real(t.residuals[it]) << '\n';
        if (it > 0) {
          res.expect(t.residuals[it] <= gamma * t.residuals[it - 1] + 1e-12, "contraction",
                     tag + " " + metric + " step " + std::to_string(it + 1));
        }
      }
      res.expect(t.residual <= kDefaultMetricTol, "convergence", tag + " " + metric);
      for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = 0; y < n; ++y) {
          res.expect(std::abs(t.values(x, y) - t.values(y, x)) <= 1e-10, "symmetry", tag + " " + metric);
          res.expect(t.values(x, y) >= 0.0, "non_negativity", tag + " " + metric);
        }
      }
      tables[metric] = std::move(t);
    }
    if (tables.size() == 2) {
      for (std::size_t i = 0; i < n * n; ++i) {
        res.expect(tables["bisim"].values.data[i] <= tables["mico"].values.data[i] + 1e-9, "dominance", tag);
      }
    }
  }
  res.artifact = csv.str();
  res.seconds = clock.seconds();
  return res;
}

/// wasserstein1 against the minimum over transport-polytope vertices, on random supports of
/// size 1..4 with random masses and non-negative costs.
inline SuiteResult transport_suite(std::size_t instances = 200, std::uint64_t seed = 4) {
  detail::Stopwatch clock;
  SuiteResult res;
  res.name = "transport_oracle";
  for (std::size_t inst = 0; inst < instances; ++inst) {
    Rng rng(seed, "transport_suite", inst);
    const std::size_t m = 1 + static_cast<std::size_t>(rng.index(4));
    const std::size_t n = 1 + static_cast<std::size_t>(rng.index(4));
    auto masses = [&](std::size_t k) {
      std::vector<double> w(k);
      double s = 0.0;
      for (double& x : w) s += (x = 0.05 + rng.uniform());
      for (double& x : w) x /= s;
      return w;
    };
    const auto mu = masses(m), nu = masses(n);
    Matrix cost(m, n);
    for (double& c : cost.data) c = rng.uniform(0.0, 10.0);
    ++res.cases;
    const double got = wasserstein1(mu, nu, cost).value;
    const double want = oracle::transport_by_vertices(mu, nu, cost);
    res.expect(std::abs(got - want) <= 1e-9, "optimal_value", "instance " + std::to_string(inst) + ": " +
                                                                  detail::describe(got, want));
  }
  res.seconds = clock.seconds();
  return res;
}

struct ChronoOptions {
  std::size_t instances = 20;
  std::size_t max_states = 5;
  std::size_t max_k_enumerated = 4;
  std::size_t max_k_bound = 20;
  std::uint64_t seed = 5;
};

/// chrono_fixed_point against path-pair enumeration (K <= 4), and its sup-norm gap to the MICo
/// fixed point bounded by gamma^K R / (1 - gamma) for K <= 20. The MICo table is itself only
/// accurate to gamma tol / (1 - gamma), which is added to the bound.
inline SuiteResult chrono_suite(const ChronoOptions& opt = {}) {
  detail::Stopwatch clock;
  SuiteResult res;
  res.name = "chrono_oracle";
  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    Rng rng(opt.seed, "chrono_suite", inst);
    const std::size_t n = 2 + static_cast<std::size_t>(rng.index(opt.max_states - 1));
    const std::size_t support = 1 + static_cast<std::size_t>(rng.index(n));
    const double gamma = rng.uniform(0.3, 0.95);
    const TabularMdp mdp = random_mdp(n, 2, support, gamma, rng.next());
    const Policy pi = random_policy(n, 2, rng);
    const std::string tag = "instance " + std::to_string(inst);

    const ChronoMetricTable table = chrono_fixed_point(mdp, pi, opt.max_k_bound);
    const auto brute = oracle::chrono_by_paths(mdp, pi, opt.max_k_enumerated);
    for (std::size_t k = 0; k <= opt.max_k_enumerated; ++k) {
      ++res.cases;
      const double err = sup_norm_diff(table.values[k], brute[k]);
      res.expect(err <= 1e-10, "path_enumeration", tag + " k=" + std::to_string(k) + " error " + format_real(err));
    }
    const MetricTable mico = mico_fixed_point(mdp, pi);
    const double range = reward_range(policy_reward(mdp, pi));
    const double mico_err = gamma * kDefaultMetricTol / (1.0 - gamma);
    for (std::size_t k = 0; k <= opt.max_k_bound; ++k) {
      ++res.cases;
      const double bound = std::pow(gamma, static_cast<double>(k)) * range / (1.0 - gamma) + mico_err;
      const double gap = sup_norm_diff(table.values[k], mico.values);
      res.expect(gap <= bound, "mico_gap_bound", tag + " k=" + std::to_string(k) + ": " + detail::describe(gap, bound));
    }
    for (std::size_t x = 0; x < n; ++x) res.expect(table.values[0](x, x) == 0.0, "zero_base");
  }
  res.seconds = clock.seconds();
  return res;
}

// ---------------------------------------------------------------------------
// temporal_measurement

/// The deterministic chain s0 -> s1 -> s2 (absorbing) with rewards 1, 2, 3 and gamma 0.5.
inline TabularMdp reward_chain() {
  TabularMdp mdp(3, 1, 0.5);
  mdp.p(0, 0, 1) = 1.0;
  mdp.p(1, 0, 2) = 1.0;
  mdp.p(2, 0, 2) = 1.0;
  mdp.reward(0, 0) = 1.0;
  mdp.reward(1, 0) = 2.0;
  mdp.reward(2, 0) = 3.0;
  return mdp;
}

/// Forward-backward conditioned returns against path enumeration for every (x, y, k <= 5),
/// unreachable endpoints raising, endpoint probabilities summing to one, and the chain example.
inline SuiteResult conditioned_return_suite(std::size_t instances = 20, std::size_t max_k = 5,
                                            std::uint64_t seed = 6) {
  detail::Stopwatch clock;
  SuiteResult res;
  res.name = "conditioned_return_oracle";
  for (std::size_t inst = 0; inst < instances; ++inst) {
    Rng rng(seed, "conditioned_return_suite", inst);
    const std::size_t n = 2 + static_cast<std::size_t>(rng.index(4));
    const std::size_t support = 1 + static_cast<std::size_t>(rng.index(n));
    const TabularMdp mdp = random_mdp(n, 2, support, rng.uniform(0.3, 0.99), rng.next(), -1.0, 1.0);
    const Policy pi = random_policy(n, 2, rng);
    for (std::size_t k = 0; k <= max_k; ++k) {
      for (std::size_t x = 0; x < n; ++x) {
        double total_prob = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
          ++res.cases;
          const std::string tag = "instance " + std::to_string(inst) + " (" + std::to_string(x) + "," +
                                  std::to_string(y) + ",k=" + std::to_string(k) + ")";
          const auto want = oracle::conditioned_by_paths(mdp, pi, x, y, k);
          const double p = endpoint_probability(mdp, pi, x, y, k);
          total_prob += p;
          res.expect(std::abs(p - want.endpoint_prob) <= 1e-12, "endpoint_probability", tag);
          if (want.endpoint_prob == 0.0) {
            bool raised = false;
            try {
              (void)conditioned_return(mdp, pi, x, y, k);
            } catch (const UnreachableEndpoint&) {
              raised = true;
            }
            res.expect(raised, "unreachable_raises", tag);
            continue;
          }
          try {
            const auto got = conditioned_return(mdp, pi, x, y, k);
            res.expect(std::abs(got.value - want.value) <= 1e-10, "path_enumeration",
                       tag + ": " + detail::describe(got.value, want.value));
          } catch (const UnreachableEndpoint& e) {
            res.fail("path_enumeration", tag + ": " + e.what());
          }
        }
        res.expect(std::abs(total_prob - 1.0) <= 1e-12, "probability_mass", "instance " + std::to_string(inst));
      }
    }
  }
  ++res.cases;
  const TabularMdp chain = reward_chain();
  const double chain_value = conditioned_return(chain, uniform_policy(3, 1), 0, 2, 2).value;
  res.expect(chain_value == 2.75, "chain_example", detail::describe(chain_value, 2.75));
  res.seconds = clock.seconds();
  return res;
}

// ---------------------------------------------------------------------------
// mdp

/// Row sums of generated MDPs, determinism of sampling, and ChronoBatch fields recomputed from
/// the source trajectories.
inline SuiteResult mdp_suite(std::size_t instances = 20, std::uint64_t seed = 7) {
  detail::Stopwatch clock;
  SuiteResult res;
  res.name = "mdp_sampling";
  for (std::size_t inst = 0; inst < instances; ++inst) {
    Rng rng(seed, "mdp_suite", inst);
    const std::size_t n = 2 + static_cast<std::size_t>(rng.index(15));
    const TabularMdp mdp = random_mdp(n, 3, 1 + static_cast<std::size_t>(rng.index(n)), 0.9, rng.next());
    ++res.cases;
    try {
      validate(mdp);
    } catch (const ValidationError& e) {
      res.fail("row_sums", e.what());
    }
    const Policy pi = random_policy(n, 3, rng);
    const std::uint64_t s = rng.next();
    std::vector<Trajectory> trajs;
    for (std::size_t k = 0; k < 4; ++k) trajs.push_back(sample_trajectory(mdp, pi, k % n, 30, s + k));
    const Trajectory again = sample_trajectory(mdp, pi, 0, 30, s);
    res.expect(again.states == trajs[0].states && again.actions == trajs[0].actions, "trajectory_determinism");
    for (const auto& tr : trajs) {
      for (std::size_t t = 0; t < tr.length(); ++t) {
        res.expect(mdp.p(tr.states[t], tr.actions[t], tr.states[t + 1]) > 0.0, "trajectory_support");
        res.expect(tr.rewards[t] == mdp.reward(tr.states[t], tr.actions[t]), "trajectory_reward");
      }
    }
    const ChronoBatch batch = sample_chrono_batch(trajs, 64, 1, 10, mdp.gamma, s);
    const ChronoBatch batch2 = sample_chrono_batch(trajs, 64, 1, 10, mdp.gamma, s);
    bool same = true;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& x = batch[b];
      same = same && x.i == batch2[b].i && x.step_gap == batch2[b].step_gap && x.trajectory == batch2[b].trajectory;
      const Trajectory& tr = trajs[x.trajectory];
      const std::size_t j = x.i + x.step_gap;
      res.expect(x.step_gap >= 1 && x.step_gap <= 10 && j < tr.length(), "gap_range");
      res.expect(x.x_i == tr.states[x.i] && x.x_i_next == tr.states[x.i + 1] && x.x_j == tr.states[j] &&
                     x.x_j_next == tr.states[j + 1],
                 "sample_states");
      double agg = 0.0;
      for (std::size_t t = 0; t <= x.step_gap; ++t) agg += std::pow(mdp.gamma, static_cast<double>(t)) * tr.rewards[x.i + t];
      res.expect(std::abs(agg - x.agg_rew) <= 1e-12, "agg_rew", detail::describe(x.agg_rew, agg));
    }
    res.expect(same, "batch_determinism");
  }
  for (const double slip : {0.0, 0.2}) {
    ++res.cases;
    try {
      validate(four_rooms(11, {9, 9}, slip));
    } catch (const Error& e) {
      res.fail("four_rooms", e.what());
    }
  }
  res.seconds = clock.seconds();
  return res;
}

// ---------------------------------------------------------------------------
// grad / scr_trainer

struct GradientOptions {
  std::size_t draws = 100;
  double tolerance = 1e-4;
  std::uint64_t seed = 8;
};

/// Small problem used by the gradient suite: 5 states, 2 actions, 4-dim embeddings.
struct GradientFixture {
  TabularMdp mdp;
  std::vector<Trajectory> trajectories;
  TrainerConfig config;
};

inline GradientFixture gradient_fixture(std::uint64_t seed) {
  GradientFixture f;
  // signed rewards: negative partner returns are what make the upper constraint bind
  f.mdp = random_mdp(5, 2, 3, 0.9, seed, -2.0, 2.0);
  Rng rng(seed, "gradient_fixture");
  const Policy pi = uniform_policy(5, 2);
  for (std::size_t k = 0; k < 4; ++k) f.trajectories.push_back(sample_trajectory(f.mdp, pi, k, 20, rng.next()));
  f.config.n_dim = 4;
  f.config.iqe_k = 2;
  f.config.iqe_l = 2;
  f.config.hidden = 6;
  f.config.batch = 6;
  f.config.horizon = 20;
  return f;
}

/// Model with parameters drawn at unit scale and a target table offset from phi, so that no
/// term of any loss is trivially zero.
inline ScrModel random_model(const GradientFixture& f, Rng& rng) {
  ScrModel m = init_model(f.mdp.n_states, f.config, rng.next());
  for (auto& [name, v] : m.params.values)
    for (double& x : v.data) x = name == "phi" ? 0.8 * rng.normal() : 0.7 * rng.normal();
  m.target_phi = m.params.at("phi");
  for (double& x : m.target_phi.data) x += 0.5 * rng.normal();
  return m;
}

/// Every loss against central differences with stop-gradient branches frozen, on random
/// parameter draws; coordinates whose step crosses a kink are excluded. Probes: the target table
/// never receives gradient, perturbing it moves the bootstrapped losses, and differences taken
/// without freezing disagree with backward() (so the blocked paths really are blocked).
inline SuiteResult gradient_suite(const GradientOptions& opt = {}) {
  detail::Stopwatch clock;
  SuiteResult res;
  res.name = "gradients";
  const GradientFixture f = gradient_fixture(opt.seed);
  const double gamma = f.mdp.gamma;
  using Builder = std::function<grad::Var(const BoundModel&, const ChronoBatch&, const Pairing&)>;
  const std::vector<std::pair<std::string, Builder>> losses = {
      {"loss_phi", [&](const BoundModel& m, const ChronoBatch& b, const Pairing& p) { return loss_phi(m, b, p, gamma); }},
      {"loss_psi", [&](const BoundModel& m, const ChronoBatch& b, const Pairing& p) { return loss_psi(m, b, p, gamma); }},
      {"loss_low", [&](const BoundModel& m, const ChronoBatch& b, const Pairing&) { return loss_low(m, b); }},
      {"loss_up", [&](const BoundModel& m, const ChronoBatch& b, const Pairing& p) { return loss_up(m, b, p); }},
      {"loss_up_learned",
       [&](const BoundModel& m, const ChronoBatch& b, const Pairing& p) {
         return loss_up(m, b, p, UpperBoundForm::kLearnedMeasure);
       }},
      {"total", [&](const BoundModel& m, const ChronoBatch& b, const Pairing& p) { return total_loss(m, b, p, gamma).total; }},
  };
  std::map<std::string, std::size_t> unfrozen_differs, active;
  std::size_t checked = 0, excluded = 0;

  for (std::size_t draw = 0; draw < opt.draws; ++draw) {
    Rng rng(opt.seed, "gradient_suite", draw);
    ScrModel model = random_model(f, rng);
    const ChronoBatch batch = sample_chrono_batch(f.trajectories, f.config.batch, 1, 5, gamma, rng.next());
    const Pairing pairing = make_pairing(f.config.batch, rng.next());
    const std::string tag = "draw " + std::to_string(draw);

    for (const auto& [name, build] : losses) {
      ++res.cases;
      const LossBuilder builder = [&, b = build](grad::Tape& tape, const ParamStore& params) {
        return b(bind(tape, params, model.target_phi, model.iqe_k, model.iqe_l), batch, pairing);
      };
      const GradCheckResult gc = check_gradients(model.params, builder);
      checked += gc.checked;
      excluded += gc.excluded;
      res.expect(gc.rel_error <= opt.tolerance, "finite_difference",
                 name + " " + tag + " rel error " + format_real(gc.rel_error));

      if (name == "loss_psi" || name == "loss_up" || name == "loss_phi") {
        const GradCheckResult raw = check_gradients(model.params, builder, 1e-5, false);
        if (raw.rel_error > 1e-3) ++unfrozen_differs[name];
      }

      // the target table only feeds stop-gradient branches
      grad::Tape tape;
      const BoundModel bound = bind(tape, model, true);
      const grad::Var root = build(bound, batch, pairing);
      const double base = root.item();
      const grad::Gradients g = tape.backward(root);
      bool zero = true;
      for (double v : g.at("target_phi").data) zero = zero && v == 0.0;
      res.expect(zero, "target_gradient_zero", name + " " + tag);
      res.expect(base >= 0.0, "non_negative", name + " " + tag);
      if (base > 0.0) ++active[name];

      if (name == "loss_phi" || name == "loss_psi") {
        ScrModel moved = model;
        for (double& v : moved.target_phi.data) v += 0.25;
        grad::Tape t2;
        const double shifted = build(bind(t2, moved), batch, pairing).item();
        res.expect(shifted != base, "target_moves_value", name + " " + tag);
      }
    }

    // one-sided ReLU and masked squared error give the same lower-constraint loss
    grad::Tape ta, tb;
    const double relu_form = loss_low(bind(ta, model), batch).item();
    const double mask_form = loss_low_masked(bind(tb, model), batch).item();
    ++res.cases;
    res.expect(std::abs(relu_form - mask_form) <= 1e-12, "low_forms_agree", tag);
  }
  // bootstrap targets depend on phi (loss_phi does not: its target is the separate table) and
  // on psi; freezing them must matter somewhere across the draws
  for (const std::string name : {"loss_psi", "loss_up"}) {
    ++res.cases;
    res.expect(unfrozen_differs[name] > 0, "blocked_paths_exist", name);
  }
  ++res.cases;
  res.expect(unfrozen_differs["loss_phi"] == 0, "phi_target_separate", "loss_phi changed without freezing");
  res.expect(checked > 0, "coverage", "no coordinate was compared");
  // the learned-measure variant is left out: two d_hat terms on the right already exceed the IQE
  // value for embeddings of comparable norm, so it rarely binds
  for (const auto& [name, _] : losses) {
    if (name == "loss_up_learned") continue;
    ++res.cases;
    res.expect(active[name] * 4 >= opt.draws, "coverage", name + " was positive in only " +
                                                            std::to_string(active[name]) + " draws");
  }
  res.note = "coordinates checked " + std::to_string(checked) + ", excluded at kinks " + std::to_string(excluded) +
             ", active draws";
  for (const auto& [name, _] : losses) res.note += " " + name + "=" + std::to_string(active[name]);
  res.seconds = clock.seconds();
  return res;
}

/// Every suite at its default size, in a stable order.
inline std::vector<SuiteResult> run_all_suites() {
  return {diffuse_metric_suite(), iqe_suite(),      contraction_suite(), transport_suite(),
          chrono_suite(),         conditioned_return_suite(), mdp_suite(), gradient_suite()};
}

}  // namespace scr::verify
