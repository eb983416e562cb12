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

// Run configuration for the command-line tool. A config document is JSON:
//
//   {
//     "seed": 0,
//     "out": "runs/a",
//     "mdp":     {"source": "inline", "document": {...}}
//              | {"source": "file", "path": "mdp.json"}
//              | {"source": "four_rooms", "size": 11, "goal": [9, 9], "slip": 0.1, "gamma": 0.9}
//              | {"source": "random", "n_states": 8, "n_actions": 2, "support": 3, "gamma": 0.9, "seed": 1},
//     "policy":  {"kind": "epsilon_greedy", "epsilon": 0.3} | {"kind": "greedy"} | {"kind": "uniform"}
//              | {"kind": "random", "seed": 3} | {"kind": "table", "probs": [[...], ...]},
//     "trainer": {"n_dim": 16, "iqe_k": 4, "iqe_l": 4, "hidden": 64, "batch": 128, "lr": 1e-4, "steps": 20000,
//                 "step_range": [1, 10], "alpha_phi": 0.05, "eps_greedy": 0.3, "l_up_form": "sampled_return", ...},
//     "oracle":  {"tol": 1e-10, "max_iter": 0, "K": 10, "k_max": 5, "policies": 100, "held_out": 4000}
//   }
//
// Unknown keys are rejected. Relative file paths resolve against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "scr/common.hpp"
#include "scr/io.hpp"
#include "scr/mdp.hpp"
#include "scr/trainer.hpp"

namespace scr {

struct OracleConfig {
  double tol = kDefaultMetricTol;
  std::size_t max_iter = 0;  // 0: derived bound
  std::size_t K = 10;        // chronological table depth
  std::size_t k_max = 5;     // largest step count in conditioned-return tables
  std::size_t policies = 100;
  std::size_t held_out = 4000;  // samples for the post-training constraint check
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out;  // empty: not given
  TabularMdp mdp;
  Policy policy;
  TrainerConfig trainer;
  OracleConfig oracle;
  nlohmann::json resolved;  // every field with defaults filled in, minus "out"
};

namespace detail {
inline void only_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

inline std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline TabularMdp load_mdp(const nlohmann::json& spec, std::uint64_t seed, const std::filesystem::path& base,
                           nlohmann::json& resolved) {
  const std::string source = get_or<std::string>(spec, "source", "");
  resolved = {{"source", source}};
  if (source == "inline") {
    only_keys(spec, {"source", "document"}, "mdp");
    if (!spec.contains("document")) throw ValidationError("mdp: inline source needs 'document'");
    TabularMdp mdp = mdp_from_json(spec.at("document"));
    resolved["document"] = to_json(mdp);
    return mdp;
  }
  if (source == "file") {
    only_keys(spec, {"source", "path"}, "mdp");
    const auto path = resolve_path(get_or<std::string>(spec, "path", ""), base);
    if (!std::filesystem::is_regular_file(path)) throw ValidationError("mdp: file not found: " + path.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("mdp: " + path.string() + ": " + e.what());
    }
    TabularMdp mdp = mdp_from_json(doc);
    resolved["path"] = get_or<std::string>(spec, "path", "");
    resolved["document"] = to_json(mdp);
    return mdp;
  }
  if (source == "four_rooms") {
    only_keys(spec, {"source", "size", "goal", "slip", "gamma"}, "mdp");
    const auto size = get_or<std::size_t>(spec, "size", 11);
    const auto goal = get_or<std::vector<std::size_t>>(spec, "goal", {size - 2, size - 2});
    if (goal.size() != 2) throw ValidationError("mdp: goal must be [row, col]");
    const double slip = get_or<double>(spec, "slip", 0.0);
    const double gamma = get_or<double>(spec, "gamma", 0.9);
    resolved.update({{"size", size}, {"goal", goal}, {"slip", slip}, {"gamma", gamma}});
    return four_rooms(size, {goal[0], goal[1]}, slip, gamma);
  }
  if (source == "random") {
    only_keys(spec, {"source", "n_states", "n_actions", "support", "gamma", "seed", "reward_lo", "reward_hi"}, "mdp");
    const auto n = get_or<std::size_t>(spec, "n_states", 8);
    const auto m = get_or<std::size_t>(spec, "n_actions", 2);
    const auto support = get_or<std::size_t>(spec, "support", 3);
    const double gamma = get_or<double>(spec, "gamma", 0.9);
    const auto mdp_seed = get_or<std::uint64_t>(spec, "seed", seed);
    const double lo = get_or<double>(spec, "reward_lo", 0.0), hi = get_or<double>(spec, "reward_hi", 1.0);
    if (!(lo <= hi)) throw ValidationError("mdp: reward_lo must not exceed reward_hi");
    resolved.update({{"n_states", n}, {"n_actions", m}, {"support", support}, {"gamma", gamma}, {"seed", mdp_seed},
                     {"reward_lo", lo}, {"reward_hi", hi}});
    TabularMdp mdp = random_mdp(n, m, support, gamma, mdp_seed, lo, hi);
    validate(mdp);
    return mdp;
  }
  throw ValidationError("mdp: source must be one of inline, file, four_rooms, random");
}

inline Policy load_policy(const nlohmann::json& spec, const TabularMdp& mdp, double default_eps, std::uint64_t seed,
                          nlohmann::json& resolved) {
  const std::string kind = get_or<std::string>(spec, "kind", "epsilon_greedy");
  resolved = {{"kind", kind}};
  if (kind == "uniform") {
    only_keys(spec, {"kind"}, "policy");
    return uniform_policy(mdp.n_states, mdp.n_actions);
  }
  if (kind == "greedy") {
    only_keys(spec, {"kind"}, "policy");
    return value_iteration(mdp).greedy;
  }
  if (kind == "epsilon_greedy") {
    only_keys(spec, {"kind", "epsilon"}, "policy");
    const double eps = get_or<double>(spec, "epsilon", default_eps);
    if (!(eps >= 0.0 && eps <= 1.0)) throw ValidationError("policy: epsilon must lie in [0, 1]");
    resolved["epsilon"] = eps;
    return epsilon_greedy(value_iteration(mdp).greedy, eps);
  }
  if (kind == "random") {
    only_keys(spec, {"kind", "seed"}, "policy");
    const auto s = get_or<std::uint64_t>(spec, "seed", seed);
    resolved["seed"] = s;
    Rng rng(s, "policy");
    return random_policy(mdp.n_states, mdp.n_actions, rng);
  }
  if (kind == "table") {
    only_keys(spec, {"kind", "probs"}, "policy");
    const auto rows = get_or<std::vector<std::vector<double>>>(spec, "probs", {});
    Policy pi{Matrix(rows.size(), rows.empty() ? 0 : rows[0].size())};
    for (std::size_t s = 0; s < rows.size(); ++s) {
      if (rows[s].size() != pi.probs.cols) throw ValidationError("policy: ragged probability table");
      for (std::size_t a = 0; a < rows[s].size(); ++a) pi.probs(s, a) = rows[s][a];
    }
    validate(pi, mdp.n_states, mdp.n_actions);
    resolved["probs"] = rows;
    return pi;
  }
  throw ValidationError("policy: kind must be one of uniform, greedy, epsilon_greedy, random, table");
}

inline TrainerConfig load_trainer(const nlohmann::json& spec, nlohmann::json& resolved) {
  only_keys(spec,
            {"n_dim", "iqe_k", "iqe_l", "hidden", "batch", "lr", "steps", "step_range", "alpha_phi", "eps_greedy",
             "l_up_form", "replay_refresh", "n_trajectories", "horizon", "eval_every", "phi_init_scale", "optimizer"},
            "trainer");
  TrainerConfig c;
  c.n_dim = get_or(spec, "n_dim", c.n_dim);
  c.iqe_k = get_or(spec, "iqe_k", c.iqe_k);
  c.iqe_l = get_or(spec, "iqe_l", c.n_dim / std::max<std::size_t>(1, c.iqe_k));
  c.hidden = get_or(spec, "hidden", c.hidden);
  c.batch = get_or(spec, "batch", c.batch);
  c.adam.lr = get_or(spec, "lr", c.adam.lr);
  c.steps = get_or(spec, "steps", c.steps);
  c.alpha_phi = get_or(spec, "alpha_phi", c.alpha_phi);
  c.eps_greedy = get_or(spec, "eps_greedy", c.eps_greedy);
  c.replay_refresh = get_or(spec, "replay_refresh", c.replay_refresh);
  c.n_trajectories = get_or(spec, "n_trajectories", c.n_trajectories);
  c.horizon = get_or(spec, "horizon", c.horizon);
  c.eval_every = get_or(spec, "eval_every", c.eval_every);
  c.phi_init_scale = get_or(spec, "phi_init_scale", c.phi_init_scale);
  if (spec.contains("step_range")) {
    const auto r = get_or<std::vector<std::size_t>>(spec, "step_range", {});
    if (r.size() != 2) throw ValidationError("trainer: step_range must be [k_min, k_max]");
    c.k_min = r[0];
    c.k_max = r[1];
  }
  const std::string form = get_or<std::string>(spec, "l_up_form", "sampled_return");
  if (form == "sampled_return") {
    c.l_up_form = UpperBoundForm::kSampledReturn;
  } else if (form == "learned_measure") {
    c.l_up_form = UpperBoundForm::kLearnedMeasure;
  } else {
    throw ValidationError("trainer: l_up_form must be sampled_return or learned_measure");
  }
  const std::string opt = get_or<std::string>(spec, "optimizer", "adam");
  if (opt == "adam") {
    c.optimizer = OptimizerKind::kAdam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::kSgd;
  } else {
    throw ValidationError("trainer: optimizer must be adam or sgd");
  }
  validate(c);
  resolved = {{"n_dim", c.n_dim},
              {"iqe_k", c.iqe_k},
              {"iqe_l", c.iqe_l},
              {"hidden", c.hidden},
              {"batch", c.batch},
              {"lr", c.adam.lr},
              {"steps", c.steps},
              {"step_range", {c.k_min, c.resolved_k_max()}},
              {"alpha_phi", c.alpha_phi},
              {"eps_greedy", c.eps_greedy},
              {"l_up_form", form},
              {"replay_refresh", c.replay_refresh},
              {"n_trajectories", c.n_trajectories},
              {"horizon", c.horizon},
              {"eval_every", c.eval_every},
              {"phi_init_scale", c.phi_init_scale},
              {"optimizer", opt}};
  return c;
}

inline OracleConfig load_oracle(const nlohmann::json& spec, nlohmann::json& resolved) {
  only_keys(spec, {"tol", "max_iter", "K", "k_max", "policies", "held_out"}, "oracle");
  OracleConfig o;
  o.tol = get_or(spec, "tol", o.tol);
  o.max_iter = get_or(spec, "max_iter", o.max_iter);
  o.K = get_or(spec, "K", o.K);
  o.k_max = get_or(spec, "k_max", o.k_max);
  o.policies = get_or(spec, "policies", o.policies);
  o.held_out = get_or(spec, "held_out", o.held_out);
  if (!(o.tol > 0.0)) throw ValidationError("oracle: tol must be positive");
  if (o.held_out == 0) throw ValidationError("oracle: held_out must be positive");
  resolved = {{"tol", o.tol}, {"max_iter", o.max_iter}, {"K", o.K}, {"k_max", o.k_max},
              {"policies", o.policies}, {"held_out", o.held_out}};
  return o;
}
}  // namespace detail

/// Builds a run from a parsed document. `base` anchors relative paths; `seed_override` replaces
/// the document's seed when set.
inline RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base,
                              std::optional<std::uint64_t> seed_override = std::nullopt) {
  try {
    detail::only_keys(doc, {"seed", "out", "mdp", "policy", "trainer", "oracle"}, "config");
    RunConfig c;
    c.seed = seed_override ? *seed_override : detail::get_or<std::uint64_t>(doc, "seed", 0);
    c.out = detail::get_or<std::string>(doc, "out", "");
    if (!doc.contains("mdp")) throw ValidationError("config: 'mdp' is required");

    nlohmann::json r_mdp, r_policy, r_trainer, r_oracle;
    c.trainer = detail::load_trainer(doc.value("trainer", nlohmann::json::object()), r_trainer);
    c.oracle = detail::load_oracle(doc.value("oracle", nlohmann::json::object()), r_oracle);
    c.mdp = detail::load_mdp(doc.at("mdp"), c.seed, base, r_mdp);
    c.policy = detail::load_policy(doc.value("policy", nlohmann::json::object()), c.mdp, c.trainer.eps_greedy, c.seed,
                                   r_policy);
    c.resolved = {{"seed", c.seed}, {"mdp", r_mdp}, {"policy", r_policy}, {"trainer", r_trainer},
                  {"oracle", r_oracle}};
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (!std::filesystem::is_regular_file(path)) throw ValidationError("config file not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config: " + path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path(), seed_override);
}

}  // namespace scr
