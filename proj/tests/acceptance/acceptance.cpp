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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scr/commands.hpp"
#include "scr/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace scr;

namespace {

struct Line {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Line> lines;

void report(int id, bool pass, const std::string& detail) {
  lines.push_back({id, pass, detail});
  std::printf("%s criterion %2d  %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string describe(const verify::SuiteResult& r) {
  std::string s = r.name + " cases=" + std::to_string(r.cases) + " failures=" + std::to_string(r.failures) +
                  " time=" + fmt(r.seconds, 3) + "s";
  for (const auto& m : r.messages) s += "\n      " + m;
  return s;
}

void suite_criterion(int id, const verify::SuiteResult& r, double max_seconds) {
  const bool fast = r.seconds < max_seconds;
  std::string detail = describe(r) + " (limit " + fmt(max_seconds) + "s)";
  if (!r.note.empty()) detail += "\n      " + r.note;
  report(id, r.passed() && fast, detail);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct EndToEnd {
  cli::TrainOutcome outcome;
  double train_seconds = 0.0;
};

// Criteria 8 and 9 share one run; the literal lower-bound sweep goes through the oracle command.
EndToEnd run_end_to_end(const RunConfig& cfg, const fs::path& dir) {
  EndToEnd e;
  const auto t0 = std::chrono::steady_clock::now();
  e.outcome = cli::cmd_train(cfg, dir);
  e.train_seconds = seconds_since(t0);
  cli::cmd_oracle(cfg, dir);
  return e;
}

void write_contraction_artifact(const fs::path& dir, const verify::SuiteResult& r) {
  write_text_file(dir / "contraction_residuals.csv", r.artifact);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out = "acceptance_out";
  std::string fixture = std::string(SCR_FIXTURE_DIR) + "/six_state_run.json";
  app.add_option("--out", out, "scratch directory for run outputs");
  app.add_option("--fixture", fixture, "run configuration for the end-to-end criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(out);
  fs::remove_all(root);
  const fs::path run_a = root / "run_a", run_b = root / "run_b";

  suite_criterion(1, verify::diffuse_metric_suite(), 5.0);
  suite_criterion(2, verify::iqe_suite(), 5.0);
  const verify::SuiteResult contraction = verify::contraction_suite();
  write_contraction_artifact(run_a, contraction);
  suite_criterion(3, contraction, 60.0);
  suite_criterion(4, verify::transport_suite(), 10.0);
  suite_criterion(5, verify::chrono_suite(), 30.0);
  suite_criterion(6, verify::conditioned_return_suite(), 10.0);
  suite_criterion(7, verify::gradient_suite(), 60.0);

  RunConfig cfg;
  try {
    cfg = load_config(fixture);
  } catch (const std::exception& e) {
    report(8, false, std::string("cannot load fixture: ") + e.what());
    report(9, false, "no run");
    report(10, false, "no run");
    return 1;
  }

  const EndToEnd first = run_end_to_end(cfg, run_a);
  {
    const auto& rec = first.outcome.report.snapshots.back().recovery;
    const double mae_limit = 0.15 * rec.max_exact;
    const bool ok = rec.rank_corr >= 0.9 && rec.mae_offdiag <= mae_limit && first.train_seconds <= 180.0 &&
                    first.outcome.report.snapshots.back().step == cfg.trainer.steps;
    report(8, ok,
           "steps=" + std::to_string(cfg.trainer.steps) + " rank_corr=" + fmt(rec.rank_corr) + " (>= 0.9) mae=" +
               fmt(rec.mae_offdiag) + " (<= " + fmt(mae_limit) + ") time=" + fmt(first.train_seconds, 3) +
               "s (<= 180s)");
  }
  {
    const ConstraintReport& c = first.outcome.constraints;
    const bool ok = c.samples > 0 && c.lower_rate() <= 0.05 && c.upper_rate() <= 0.05;
    const auto sweep = nlohmann::json::parse(read_text_file(run_a / "oracle_manifest.json")).at("lower_bound_sweep");
    report(9, ok,
           "held-out samples=" + std::to_string(c.samples) + " lower violations=" + fmt(c.lower_rate()) +
               " upper violations=" + fmt(c.upper_rate()) + " (each <= 0.05, tolerance " + fmt(c.tolerance) +
               ")\n      literal lower bound across " + sweep.at("policies").dump() +
               " random policies (reported only): overall violation rate " +
               fmt(sweep.at("overall_violation_rate").get<double>()) + ", policies with a violation " +
               sweep.at("policies_with_violations").dump());
  }

  {
    write_contraction_artifact(run_b, verify::contraction_suite());
    run_end_to_end(cfg, run_b);
    std::vector<std::string> differing;
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(run_a)) {
      const fs::path name = entry.path().filename();
      ++compared;
      if (!fs::exists(run_b / name) || read_text_file(entry.path()) != read_text_file(run_b / name)) {
        differing.push_back(name.string());
      }
    }
    std::string detail = std::to_string(compared) + " files compared";
    for (const auto& d : differing) detail += ", differs: " + d;
    report(10, compared > 0 && differing.empty(), detail);
  }

  std::size_t failed = 0;
  for (const auto& l : lines) failed += l.pass ? 0 : 1;
  std::printf("%zu of %zu criteria passed\n", lines.size() - failed, lines.size());
  return failed == 0 ? 0 : 1;
}
