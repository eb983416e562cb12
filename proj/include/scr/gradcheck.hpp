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

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scr/grad.hpp"
#include "scr/optim.hpp"

namespace scr {

/// Builds a scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<grad::Var(grad::Tape&, const ParamStore&)>;

struct GradCheckResult {
  double rel_error = 0.0;     // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs_error = 0.0;
  std::size_t checked = 0;    // coordinates compared
  std::size_t excluded = 0;   // coordinates whose +-h evaluation changed branch
};

/// Central finite differences over every parameter entry. With `freeze_stop_gradients` the
/// stop-gradient branches keep their base-point values, so the numeric derivative is of the same
/// function backward() differentiates; without it the difference quotient also sees the blocked
/// paths. A coordinate is left out when the branch signature at x + h or x - h differs
/// from the one at x (the step crosses a kink).
inline GradCheckResult check_gradients(ParamStore& params, const LossBuilder& build, double h = 1e-5,
                                       bool freeze_stop_gradients = true) {
  grad::Gradients analytic;
  std::uint64_t base_sig = 0;
  std::vector<grad::Tensor> frozen;
  {
    grad::Tape tape;
    tape.record_stop_gradients(&frozen);
    grad::Var root = build(tape, params);
    base_sig = tape.branch_signature();
    analytic = tape.backward(root);
  }
  auto eval = [&](std::uint64_t& sig) {
    grad::Tape tape;
    if (freeze_stop_gradients) tape.replay_stop_gradients(&frozen);
    const double v = build(tape, params).item();
    sig = tape.branch_signature();
    return v;
  };

  GradCheckResult res;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (auto& [name, value] : params.values) {
    const auto it = analytic.find(name);
    for (std::size_t i = 0; i < value.data.size(); ++i) {
      const double saved = value.data[i];
      std::uint64_t sp = 0, sm = 0;
      value.data[i] = saved + h;
      const double fp = eval(sp);
      value.data[i] = saved - h;
      const double fm = eval(sm);
      value.data[i] = saved;
      if (sp != base_sig || sm != base_sig) {
        ++res.excluded;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = it == analytic.end() ? 0.0 : it->second.data[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      res.max_abs_error = std::max(res.max_abs_error, std::abs(a - numeric));
      ++res.checked;
    }
  }
  const double denom = std::sqrt(std::max(a2, n2));
  res.rel_error = denom > 1e-12 ? std::sqrt(diff2) / denom : std::sqrt(diff2);
  return res;
}

}  // namespace scr
