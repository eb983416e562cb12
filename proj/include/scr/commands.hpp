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

// Subcommands of the `scr` tool. Exit codes: 0 ok, 1 failed checks or unexpected error,
// 2 configuration error, 3 non-convergence, 4 divergence.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "scr/config.hpp"
#include "scr/exact_metrics.hpp"
#include "scr/io.hpp"
#include "scr/temporal.hpp"
#include "scr/trainer.hpp"
#include "scr/verify/suites.hpp"

namespace scr::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kNonConvergence = 3, kDivergence = 4 };

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

/// --out, then the config's "out", then $SCR_OUT_DIR, then ./scr_out. Relative paths from the
/// config land under $SCR_OUT_DIR when it is set.
inline fs::path output_dir(const Options& opt, const std::string& config_out) {
  if (!opt.out.empty()) return opt.out;
  const char* root = std::getenv("SCR_OUT_DIR");
  if (!config_out.empty()) {
    const fs::path p(config_out);
    return (p.is_relative() && root != nullptr && *root != '\0') ? fs::path(root) / p : p;
  }
  if (root != nullptr && *root != '\0') return root;
  return "scr_out";
}

inline nlohmann::json manifest(const std::string& command, const RunConfig& cfg) {
  return {{"version", kVersion}, {"command", command}, {"config", cfg.resolved}};
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline nlohmann::json table_summary(const MetricTable& t) {
  return {{"iterations", t.iterations}, {"residual", t.residual}, {"residuals", t.residuals}};
}

// ---------------------------------------------------------------------------

inline void cmd_exact(const RunConfig& cfg, const fs::path& out) {
  const MetricTable mico = mico_fixed_point(cfg.mdp, cfg.policy, cfg.oracle.tol, cfg.oracle.max_iter);
  const MetricTable bisim = bisim_fixed_point(cfg.mdp, cfg.policy, cfg.oracle.tol, cfg.oracle.max_iter);
  const ChronoMetricTable chrono = chrono_fixed_point(cfg.mdp, cfg.policy, cfg.oracle.K);
  std::ostringstream a, b, c;
  write_metric_csv(a, mico.values);
  write_metric_csv(b, bisim.values);
  write_chrono_csv(c, chrono);
  write_text_file(out / "mico.csv", a.str());
  write_text_file(out / "bisim.csv", b.str());
  write_text_file(out / "chrono_k.csv", c.str());
  nlohmann::json m = manifest("exact", cfg);
  m["results"] = {{"mico", table_summary(mico)}, {"bisim", table_summary(bisim)}, {"chrono", {{"K", cfg.oracle.K}}}};
  m["files"] = {"mico.csv", "bisim.csv", "chrono_k.csv"};
  write_json(out / "manifest.json", m);
}

/// step,loss_phi,...: one row per optimizer step; mae and rank_corr are filled on snapshot
/// steps. Step 0 carries only the initial snapshot.
inline std::string report_csv(const TrainingReport& rep) {
  std::ostringstream os;
  os << "step,loss_phi,loss_psi,loss_low,loss_up,total,mae,rank_corr\n";
  std::size_t snap = 0;
  auto snapshot_fields = [&](std::size_t step) {
    if (snap < rep.snapshots.size() && rep.snapshots[snap].step == step) {
      const auto& r = rep.snapshots[snap++].recovery;
      return format_real(r.mae) + "," + format_real(r.rank_corr);
    }
    return std::string(",");
  };
  os << "0,,,,,," << snapshot_fields(0) << '\n';
  for (const auto& l : rep.losses) {
    os << l.step << ',' << format_real(l.loss_phi) << ',' << format_real(l.loss_psi) << ',' << format_real(l.loss_low)
       << ',' << format_real(l.loss_up) << ',' << format_real(l.total) << ',' << snapshot_fields(l.step) << '\n';
  }
  return os.str();
}

inline nlohmann::json checkpoint_json(const ScrModel& model) {
  return {{"version", kVersion},
          {"step", model.params.step},
          {"iqe_k", model.iqe_k},
          {"iqe_l", model.iqe_l},
          {"params", to_json(model.params)},
          {"target_phi", tensor_to_json(model.target_phi)}};
}

inline ScrModel model_from_checkpoint(const nlohmann::json& j) {
  ScrModel m;
  m.params = params_from_json(j.at("params"));
  m.params.step = j.at("step").get<std::size_t>();
  m.target_phi = tensor_from_json(j.at("target_phi"));
  m.iqe_k = j.at("iqe_k").get<std::size_t>();
  m.iqe_l = j.at("iqe_l").get<std::size_t>();
  return m;
}

struct TrainOutcome {
  TrainingReport report;
  ConstraintReport constraints;
};

inline TrainOutcome cmd_train(const RunConfig& cfg, const fs::path& out) {
  TrainOutcome res;
  res.report = train(cfg.mdp, cfg.policy, cfg.trainer, cfg.seed);
  const TrainingReport& rep = res.report;
  res.constraints = evaluate_constraints(cfg.mdp, rep.model, rep.behavior, rep.exact.values, cfg.trainer,
                                         cfg.oracle.held_out, cfg.seed);
  write_text_file(out / "report.csv", report_csv(rep));

  const Snapshot& last = rep.snapshots.back();
  nlohmann::json s = manifest("train", cfg);
  s["final"] = {{"step", last.step},
                {"mae", last.recovery.mae},
                {"mae_offdiag", last.recovery.mae_offdiag},
                {"rank_corr", last.recovery.rank_corr},
                {"max_exact", last.recovery.max_exact},
                {"m_alpha", rep.model.alpha()}};
  s["constraints"] = {{"samples", res.constraints.samples},
                      {"tolerance", res.constraints.tolerance},
                      {"lower_violation_rate", res.constraints.lower_rate()},
                      {"upper_violation_rate", res.constraints.upper_rate()}};
  s["exact_mico"] = {{"iterations", rep.exact.iterations}, {"residual", rep.exact.residual}};
  s["files"] = {"report.csv", "summary.json", "checkpoint.json"};
  write_json(out / "summary.json", s);
  write_json(out / "checkpoint.json", checkpoint_json(rep.model));
  return res;
}

/// Runs every property suite and prints one line per suite. Returns true when all pass.
inline bool cmd_check(std::ostream& os) {
  bool ok = true;
  for (const auto& r : verify::run_all_suites()) {
    os << (r.passed() ? "PASS " : "FAIL ") << r.name << "  cases=" << r.cases << " failures=" << r.failures
       << " seconds=" << format_real(std::round(r.seconds * 1000.0) / 1000.0);
    if (!r.note.empty()) os << "  (" << r.note << ")";
    os << '\n';
    for (const auto& [prop, n] : r.violations) os << "    " << prop << ": " << n << " violations\n";
    for (const auto& m : r.messages) os << "    " << m << '\n';
    ok = ok && r.passed();
  }
  return ok;
}

inline void append_conditioned_rows(std::ostream& os, const std::string& label, const TabularMdp& mdp,
                                    const Policy& pi, std::size_t k_max) {
  for (std::size_t k = 0; k <= k_max; ++k) {
    for (StateId x = 0; x < mdp.n_states; ++x) {
      for (StateId y = 0; y < mdp.n_states; ++y) {
        os << label << ',' << x << ',' << y << ',' << k << ',';
        try {
          const auto cr = conditioned_return(mdp, pi, x, y, k);
          os << format_real(cr.endpoint_prob) << ',' << format_real(cr.value) << '\n';
        } catch (const UnreachableEndpoint&) {
          os << "0,unreachable\n";
        }
      }
    }
  }
}

inline void cmd_oracle(const RunConfig& cfg, const fs::path& out) {
  std::ostringstream cr;
  cr << "policy,x,y,k,endpoint_prob,conditioned_return\n";
  append_conditioned_rows(cr, "configured", cfg.mdp, cfg.policy, cfg.oracle.k_max);
  append_conditioned_rows(cr, "optimal", cfg.mdp, value_iteration(cfg.mdp).greedy, cfg.oracle.k_max);
  write_text_file(out / "conditioned_returns.csv", cr.str());

  const auto sweep = lower_bound_policy_sweep(cfg.mdp, cfg.oracle.policies, std::max<std::size_t>(1, cfg.oracle.k_max),
                                              cfg.seed);
  std::ostringstream vr;
  vr << "policy,checked,violations,skipped,violation_rate\n";
  std::size_t checked = 0, violations = 0, with_violation = 0;
  for (const auto& e : sweep) {
    vr << e.policy << ',' << e.checked << ',' << e.violations << ',' << e.skipped << ',' << format_real(e.violation_rate)
       << '\n';
    checked += e.checked;
    violations += e.violations;
    with_violation += e.violations > 0 ? 1 : 0;
  }
  write_text_file(out / "violation_rates.csv", vr.str());

  nlohmann::json m = manifest("oracle", cfg);
  m["lower_bound_sweep"] = {
      {"policies", sweep.size()},
      {"checked", checked},
      {"violations", violations},
      {"policies_with_violations", with_violation},
      {"overall_violation_rate", checked > 0 ? static_cast<double>(violations) / static_cast<double>(checked) : 0.0}};
  m["files"] = {"conditioned_returns.csv", "violation_rates.csv"};
  write_json(out / "oracle_manifest.json", m);
}

// ---------------------------------------------------------------------------

/// Parses argv, dispatches, and maps library errors to exit codes.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Behavioral metrics, temporal measurements and representation training on tabular MDPs", "scr"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config, "JSON run configuration");
    if (config_required) c->required();
    sub->add_option("--seed", seed_value, "seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory");
  };
  CLI::App* exact = app.add_subcommand("exact", "exact MICo, bisimulation and chronological metric tables");
  CLI::App* trainc = app.add_subcommand("train", "train the representation and write report, summary, checkpoint");
  CLI::App* check = app.add_subcommand("check", "run every property suite");
  CLI::App* oracle = app.add_subcommand("oracle", "conditioned-return tables and the lower-bound policy sweep");
  add_common(exact, true);
  add_common(trainc, true);
  add_common(oracle, true);
  check->add_option("--config", opt.config, "ignored; suites are self-contained");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }
  for (CLI::App* sub : {exact, trainc, oracle}) {
    if (sub->count("--seed") > 0) opt.seed = seed_value;
  }

  try {
    if (*check) {
      const bool ok = cmd_check(out);
      out << (ok ? "all suites passed\n" : "some suites failed\n");
      return ok ? kOk : kFailure;
    }
    const RunConfig cfg = load_config(opt.config, opt.seed);
    const fs::path dir = output_dir(opt, cfg.out);
    if (*exact) {
      cmd_exact(cfg, dir);
      out << "wrote mico.csv, bisim.csv, chrono_k.csv, manifest.json to " << dir.string() << '\n';
    } else if (*trainc) {
      const TrainOutcome r = cmd_train(cfg, dir);
      const auto& f = r.report.snapshots.back().recovery;
      out << "final mae " << format_real(f.mae) << ", rank correlation " << format_real(f.rank_corr) << "; wrote "
          << dir.string() << '\n';
    } else if (*oracle) {
      cmd_oracle(cfg, dir);
      out << "wrote conditioned_returns.csv, violation_rates.csv, oracle_manifest.json to " << dir.string() << '\n';
    }
    return kOk;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const ValidationError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace scr::cli
