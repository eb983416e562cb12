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

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every op appends a node to the tape; the tape is append-only so creation order is a
// topological order and backward() is a single reverse sweep. Nodes built from constants or
// behind stop_gradient() carry requires_grad = false and are skipped by the sweep.
//
// Ops whose derivative is discontinuous (relu, abs, clamp_min, max, the IQE interval sweep)
// fold their branch decisions into branch_signature(). Two evaluations with equal signatures
// ran the same piecewise-smooth branch, which is what the finite-difference harness relies on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "scr/common.hpp"

namespace scr::grad {

using Tensor = Matrix;
using Gradients = std::map<std::string, Tensor>;

inline constexpr double kSqrtGradFloor = 1e-24;

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  /// Value of a 1x1 node.
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  /// Trainable leaf; its gradient is reported by backward() under `name`.
  Var parameter(const std::string& name, Tensor value) {
    Var v = push(std::move(value), true, nullptr);
    nodes_[v.id()].param_name = name;
    return v;
  }

  /// Reverse sweep from a scalar root. A tape can be swept once.
  Gradients backward(Var root) {
    if (backward_done_) throw Error("backward: tape already swept; build a new tape");
    const Tensor& rv = root.value();
    if (rv.rows != 1 || rv.cols != 1) throw ShapeError("backward: root must be a 1x1 scalar");
    backward_done_ = true;
    grad_ref(root.id()).data[0] = 1.0;
    for (std::size_t id = root.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.requires_grad || node.grad.data.empty() || !node.backward) continue;
      // The closure may append to other nodes' gradients; copy ours first.
      const Tensor g = node.grad;
      node.backward(*this, g);
    }
    Gradients out;
    for (auto& node : nodes_) {
      if (node.param_name.empty()) continue;
      if (node.grad.data.empty()) node.grad = Tensor(node.value.rows, node.value.cols, 0.0);
      out[node.param_name] = node.grad;
    }
    return out;
  }

  bool swept() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

  std::uint64_t branch_signature() const { return signature_; }

  /// Stop-gradient outputs are appended to `record` in creation order.
  void record_stop_gradients(std::vector<Tensor>* record) { sg_record_ = record; }
  /// Stop-gradient outputs are taken from `replay` in creation order instead of their inputs,
  /// which evaluates the loss with every blocked branch frozen.
  void replay_stop_gradients(const std::vector<Tensor>* replay) { sg_replay_ = replay; }

  Tensor stop_gradient_value(const Tensor& input) {
    if (sg_replay_ != nullptr) {
      if (sg_cursor_ >= sg_replay_->size()) throw Error("stop_gradient replay exhausted");
      const Tensor& v = (*sg_replay_)[sg_cursor_++];
      if (v.rows != input.rows || v.cols != input.cols) throw ShapeError("stop_gradient replay shape mismatch");
      return v;
    }
    if (sg_record_ != nullptr) sg_record_->push_back(input);
    return input;
  }
  void note_branch(std::uint64_t decision) {
    signature_ ^= decision + 0x9e3779b97f4a7c15ULL + (signature_ << 6) + (signature_ >> 2);
  }

  // -- internals used by the ops --------------------------------------------------------------

  Var push(Tensor value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(fn), {}});
    return Var(this, nodes_.size() - 1);
  }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulator of a node, zero-initialized on first use.
  Tensor& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.rows, n.value.cols, 0.0);
    return n.grad;
  }
  void accumulate(std::size_t id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor& acc = grad_ref(id);
    for (std::size_t i = 0; i < g.data.size(); ++i) acc.data[i] += g.data[i];
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::uint64_t signature_ = 0;
  std::vector<Tensor>* sg_record_ = nullptr;
  const std::vector<Tensor>* sg_replay_ = nullptr;
  std::size_t sg_cursor_ = 0;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline double Var::item() const {
  const Tensor& v = value();
  if (v.rows != 1 || v.cols != 1) throw ShapeError("item: not a 1x1 node");
  return v.data[0];
}

namespace detail {
inline void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}
inline void same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw Error("operands live on different tapes");
}
inline bool any_requires(const Var& a) { return a.tape()->requires_grad(a.id()); }
inline bool any_requires(const Var& a, const Var& b) { return any_requires(a) || any_requires(b); }

/// Elementwise unary op with derivative df(x, y) where y = f(x).
template <typename F, typename DF>
Var unary(const Var& x, F f, DF df) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.data.size(); ++i) out.data[i] = f(xv.data[i]);
  const std::size_t xid = x.id();
  return t.push(std::move(out), any_requires(x), [xid, df](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(xid);
    Tensor gx(xv.rows, xv.cols);
    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] = g.data[i] * df(xv.data[i]);
    tp.accumulate(xid, gx);
  });
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Structural ops

/// Rows of `table` picked by index (an embedding lookup, equivalently a one-hot matmul).
inline Var gather_rows(const Var& table, const std::vector<std::size_t>& rows) {
  Tape& t = *table.tape();
  const Tensor& tv = table.value();
  Tensor out(rows.size(), tv.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= tv.rows) throw ShapeError("gather_rows: index out of range");
    std::copy_n(tv.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * tv.cols), tv.cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * tv.cols));
  }
  const std::size_t id = table.id();
  return t.push(std::move(out), detail::any_requires(table), [id, rows](Tape& tp, const Tensor& g) {
    const Tensor& tv = tp.value(id);
    Tensor gt(tv.rows, tv.cols, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < tv.cols; ++c) gt(rows[r], c) += g(r, c);
    tp.accumulate(id, gt);
  });
}

/// Stacks b below a.
inline Var concat_rows(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  if (a.cols() != b.cols()) throw ShapeError("concat_rows: column counts differ");
  Tensor out(a.rows() + b.rows(), a.cols());
  std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
  std::copy(b.value().data.begin(), b.value().data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(a.value().data.size()));
  const std::size_t ia = a.id(), ib = b.id(), na = a.value().data.size();
  return a.tape()->push(std::move(out), detail::any_requires(a, b), [ia, ib, na](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    Tensor ga(av.rows, av.cols), gb(bv.rows, bv.cols);
    std::copy_n(g.data.begin(), na, ga.data.begin());
    std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(na), g.data.end(), gb.data.begin());
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
}

/// Places b to the right of a.
inline Var concat_cols(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out(rows, ca + cb);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out(r, c) = a.value()(r, c);
    for (std::size_t c = 0; c < cb; ++c) out(r, ca + c) = b.value()(r, c);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), detail::any_requires(a, b), [=](Tape& tp, const Tensor& g) {
    Tensor ga(rows, ca), gb(rows, cb);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < ca; ++c) ga(r, c) = g(r, c);
      for (std::size_t c = 0; c < cb; ++c) gb(r, c) = g(r, ca + c);
    }
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
}

/// input [B x in] * weight [in x out] + bias [1 x out].
inline Var affine(const Var& weight, const Var& bias, const Var& input) {
  detail::same_tape(weight, input);
  detail::same_tape(bias, input);
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  const Tensor& x = input.value();
  if (x.cols != w.rows) throw ShapeError("affine: input width does not match weight rows");
  if (b.rows != 1 || b.cols != w.cols) throw ShapeError("affine: bias must be 1 x out");
  Tensor out(x.rows, w.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double* o = &out.data[r * w.cols];
    for (std::size_t c = 0; c < w.cols; ++c) o[c] = b.data[c];
    for (std::size_t k = 0; k < w.rows; ++k) {
      const double xv = x(r, k);
      if (xv == 0.0) continue;
      const double* wr = &w.data[k * w.cols];
      for (std::size_t c = 0; c < w.cols; ++c) o[c] += xv * wr[c];
    }
  }
  const std::size_t iw = weight.id(), ib = bias.id(), ix = input.id();
  const bool req = detail::any_requires(weight, bias) || detail::any_requires(input);
  return input.tape()->push(std::move(out), req, [iw, ib, ix](Tape& tp, const Tensor& g) {
    const Tensor& w = tp.value(iw);
    const Tensor& x = tp.value(ix);
    if (tp.requires_grad(iw)) {
      Tensor gw(w.rows, w.cols, 0.0);
      for (std::size_t r = 0; r < x.rows; ++r) {
        const double* gr = &g.data[r * w.cols];
        for (std::size_t k = 0; k < w.rows; ++k) {
          const double xv = x(r, k);
          if (xv == 0.0) continue;
          double* gwr = &gw.data[k * w.cols];
          for (std::size_t c = 0; c < w.cols; ++c) gwr[c] += xv * gr[c];
        }
      }
      tp.accumulate(iw, gw);
    }
    if (tp.requires_grad(ib)) {
      Tensor gb(1, w.cols, 0.0);
      for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < w.cols; ++c) gb.data[c] += g(r, c);
      tp.accumulate(ib, gb);
    }
    if (tp.requires_grad(ix)) {
      Tensor gx(x.rows, x.cols, 0.0);
      for (std::size_t r = 0; r < x.rows; ++r) {
        const double* gr = &g.data[r * w.cols];
        for (std::size_t k = 0; k < w.rows; ++k) {
          const double* wr = &w.data[k * w.cols];
          double s = 0.0;
          for (std::size_t c = 0; c < w.cols; ++c) s += gr[c] * wr[c];
          gx(r, k) = s;
        }
      }
      tp.accumulate(ix, gx);
    }
  });
}

/// Identity forward, no gradient backward.
inline Var stop_gradient(const Var& x) {
  Tape& t = *x.tape();
  return t.push(t.stop_gradient_value(x.value()), false, nullptr);
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  detail::same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), detail::any_requires(a, b), [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

inline Var subtract(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  detail::same_shape(a, b, "subtract");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), detail::any_requires(a, b), [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g);
    Tensor neg = g;
    for (double& v : neg.data) v = -v;
    tp.accumulate(ib, neg);
  });
}

inline Var multiply(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  detail::same_shape(a, b, "multiply");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), detail::any_requires(a, b), [ia, ib](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    Tensor ga(av.rows, av.cols), gb(bv.rows, bv.cols);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] = g.data[i] * bv.data[i];
      gb.data[i] = g.data[i] * av.data[i];
    }
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
}

inline Var scalar_multiply(const Var& x, double c) {
  return detail::unary(x, [c](double v) { return c * v; }, [c](double) { return c; });
}

inline Var add_scalar(const Var& x, double c) {
  return detail::unary(x, [c](double v) { return v + c; }, [](double) { return 1.0; });
}

/// Every entry of x times the 1x1 node s.
inline Var scale_by(const Var& x, const Var& s) {
  detail::same_tape(x, s);
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: scale must be 1x1");
  const double sv = s.value().data[0];
  Tensor out = x.value();
  for (double& v : out.data) v *= sv;
  const std::size_t ix = x.id(), is = s.id();
  return x.tape()->push(std::move(out), detail::any_requires(x, s), [ix, is](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(ix);
    const double sv = tp.value(is).data[0];
    Tensor gx(xv.rows, xv.cols);
    double gs = 0.0;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      gx.data[i] = g.data[i] * sv;
      gs += g.data[i] * xv.data[i];
    }
    tp.accumulate(ix, gx);
    Tensor gst(1, 1, gs);
    tp.accumulate(is, gst);
  });
}

inline Var rectified_linear(const Var& x) {
  for (double v : x.value().data) x.tape()->note_branch(v > 0.0 ? 0x51ULL : 0x50ULL);
  return detail::unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

/// |x| with derivative 0 at 0.
inline Var absolute(const Var& x) {
  for (double v : x.value().data) x.tape()->note_branch(v > 0.0 ? 0xa1ULL : (v < 0.0 ? 0xa2ULL : 0xa0ULL));
  return detail::unary(x, [](double v) { return std::abs(v); },
                       [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Var square(const Var& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

/// sqrt(max(x, 0)); the derivative evaluates 1 / (2 sqrt(max(x, 1e-24))) to stay finite at 0.
inline Var sqrt(const Var& x) {
  return detail::unary(x, [](double v) { return std::sqrt(std::max(v, 0.0)); },
                       [](double v) { return 0.5 / std::sqrt(std::max(v, kSqrtGradFloor)); });
}

/// max(x, c), derivative 1 strictly above c.
inline Var clamp_min(const Var& x, double c) {
  for (double v : x.value().data) x.tape()->note_branch(v > c ? 0xc1ULL : 0xc0ULL);
  return detail::unary(x, [c](double v) { return v > c ? v : c; }, [c](double v) { return v > c ? 1.0 : 0.0; });
}

inline Var sigmoid(const Var& x) {
  auto f = [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
  return detail::unary(x, f, [f](double v) {
    const double s = f(v);
    return s * (1.0 - s);
  });
}

// ---------------------------------------------------------------------------
// Reductions

/// Row-wise inner product: [B x n], [B x n] -> [B x 1].
inline Var dot(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  detail::same_shape(a, b, "dot");
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor out(rows, 1, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += a.value()(r, c) * b.value()(r, c);
    out.data[r] = s;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), detail::any_requires(a, b), [=](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    Tensor ga(rows, cols), gb(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        ga(r, c) = g.data[r] * bv(r, c);
        gb(r, c) = g.data[r] * av(r, c);
      }
    }
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
}

/// Row-wise squared L2 norm: [B x n] -> [B x 1].
inline Var squared_norm(const Var& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(rows, 1, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x.value()(r, c) * x.value()(r, c);
    out.data[r] = s;
  }
  const std::size_t ix = x.id();
  return x.tape()->push(std::move(out), detail::any_requires(x), [=](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(ix);
    Tensor gx(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx(r, c) = 2.0 * g.data[r] * xv(r, c);
    tp.accumulate(ix, gx);
  });
}

/// Row-wise maximum: [B x n] -> [B x 1]. The gradient goes to the first maximal entry.
inline Var max_over_axis(const Var& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (cols == 0) throw ShapeError("max_over_axis: empty rows");
  Tensor out(rows, 1);
  std::vector<std::size_t> arg(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 1; c < cols; ++c)
      if (x.value()(r, c) > x.value()(r, arg[r])) arg[r] = c;
    out.data[r] = x.value()(r, arg[r]);
    x.tape()->note_branch(0x3a000ULL + arg[r]);
  }
  const std::size_t ix = x.id();
  return x.tape()->push(std::move(out), detail::any_requires(x), [=](Tape& tp, const Tensor& g) {
    Tensor gx(rows, cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) gx(r, arg[r]) = g.data[r];
    tp.accumulate(ix, gx);
  });
}

/// Row-wise mean: [B x n] -> [B x 1].
inline Var mean_over_axis(const Var& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(rows, 1, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x.value()(r, c);
    out.data[r] = s / static_cast<double>(cols);
  }
  const std::size_t ix = x.id();
  return x.tape()->push(std::move(out), detail::any_requires(x), [=](Tape& tp, const Tensor& g) {
    Tensor gx(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx(r, c) = g.data[r] / static_cast<double>(cols);
    tp.accumulate(ix, gx);
  });
}

/// Mean of all entries -> 1x1.
inline Var mean(const Var& x) {
  const auto& xv = x.value();
  if (xv.data.empty()) throw ShapeError("mean: empty tensor");
  const double m = std::accumulate(xv.data.begin(), xv.data.end(), 0.0) / static_cast<double>(xv.data.size());
  const std::size_t ix = x.id();
  return x.tape()->push(Tensor(1, 1, m), detail::any_requires(x), [ix](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(ix);
    Tensor gx(xv.rows, xv.cols, g.data[0] / static_cast<double>(xv.data.size()));
    tp.accumulate(ix, gx);
  });
}

// ---------------------------------------------------------------------------
// Interval quasimetric components

/// Per-row, per-component union length of the intervals [a_j, max(a_j, b_j)], j over the l
/// entries of each of the k components: [B x kl], [B x kl] -> [B x k].
///
/// The union length is a sum over merged segments of (segment end - segment start); each start
/// is some a_j and each end is some max(a_j, b_j), so the derivative is -1 on the start entry
/// and +1 on the end entry of every segment.
inline Var iqe_components(const Var& a, const Var& b, std::size_t k, std::size_t l) {
  detail::same_tape(a, b);
  detail::same_shape(a, b, "iqe_components");
  if (k == 0 || l == 0 || a.cols() != k * l) throw ShapeError("iqe_components: width must equal k*l");
  const std::size_t rows = a.rows();
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();

  // Per (row, component): list of (start entry, end entry, end-is-b) for each merged segment.
  struct Segment {
    std::size_t start;
    std::size_t end;
    bool end_on_b;
  };
  std::vector<std::vector<Segment>> segments(rows * k);
  Tensor out(rows, k, 0.0);
  std::vector<std::size_t> order(l);

  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      const double* lo = &av.data[r * k * l + i * l];
      const double* hi = &bv.data[r * k * l + i * l];
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(),
                [&](std::size_t x, std::size_t y) { return lo[x] < lo[y] || (lo[x] == lo[y] && x < y); });
      auto& segs = segments[r * k + i];
      auto end_of = [&](std::size_t j) { return hi[j] > lo[j] ? hi[j] : lo[j]; };
      Segment cur{order[0], order[0], hi[order[0]] > lo[order[0]]};
      double cur_hi = end_of(order[0]);
      double total = 0.0;
      std::uint64_t sig = 0x1e0000ULL;
      for (std::size_t j = 0; j < l; ++j) sig = sig * 31 + order[j] * 2 + (hi[j] > lo[j] ? 1 : 0);
      for (std::size_t p = 1; p < l; ++p) {
        const std::size_t j = order[p];
        const double e = end_of(j);
        if (lo[j] > cur_hi) {
          total += cur_hi - lo[cur.start];
          segs.push_back(cur);
          cur = Segment{j, j, hi[j] > lo[j]};
          cur_hi = e;
          sig = sig * 7 + 1;
        } else if (e > cur_hi) {
          cur.end = j;
          cur.end_on_b = hi[j] > lo[j];
          cur_hi = e;
          sig = sig * 7 + 2;
        } else {
          sig = sig * 7 + 3;
        }
      }
      total += cur_hi - lo[cur.start];
      segs.push_back(cur);
      out(r, i) = total;
      t.note_branch(sig);
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), detail::any_requires(a, b),
                [=, segments = std::move(segments)](Tape& tp, const Tensor& g) {
                  Tensor ga(rows, k * l, 0.0), gb(rows, k * l, 0.0);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t i = 0; i < k; ++i) {
                      const double gi = g(r, i);
                      const std::size_t base = r * k * l + i * l;
                      for (const auto& s : segments[r * k + i]) {
                        ga.data[base + s.start] -= gi;
                        if (s.end_on_b) {
                          gb.data[base + s.end] += gi;
                        } else {
                          ga.data[base + s.end] += gi;
                        }
                      }
                    }
                  }
                  tp.accumulate(ia, ga);
                  tp.accumulate(ib, gb);
                });
}

// ---------------------------------------------------------------------------
// Composite distances used by the losses

/// Row-wise d_hat: sqrt(max(||a||^2 + ||b||^2 - a.b, 0)) -> [B x 1].
inline Var d_hat(const Var& a, const Var& b) {
  Var radicand = subtract(add(squared_norm(a), squared_norm(b)), dot(a, b));
  return sqrt(clamp_min(radicand, 0.0));
}

/// Row-wise IQE with a 1x1 mixing weight alpha -> [B x 1].
inline Var iqe(const Var& a, const Var& b, std::size_t k, std::size_t l, const Var& alpha) {
  Var d = iqe_components(a, b, k, l);
  Var mx = max_over_axis(d);
  Var mn = mean_over_axis(d);
  // alpha * max + (1 - alpha) * mean = mean + alpha * (max - mean)
  return add(mn, scale_by(subtract(mx, mn), alpha));
}

}  // namespace scr::grad
