#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cslsl/param_store.hpp"

namespace cslsl::grad {

// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;

  bool valid() const { return id != kNone; }
};

struct GruVars {
  Var w;  // 3H x in, gate rows ordered [update; reset; candidate]
  Var u;  // 3H x H
  Var b;  // 1 x 3H
};

// Reverse-mode tape over row-batched matrices. Every op treats its inputs as
// B rows of independent examples unless stated otherwise.
//
// A tape is single-threaded. Parameter leaves read values from, and
// accumulate gradients into, the ParamStore they were taken from.
class Tape {
 public:
  explicit Tape(ParamStore* params = nullptr) : params_(params) {}

  Var constant(Tensor2 value);
  // Leaf whose gradient is kept on the tape (readable through grad()).
  Var input(Tensor2 value);
  Var param(ParamId id);
  GruVars gru_params(ParamId w, ParamId u, ParamId b);

  const Tensor2& value(Var v) const;
  // Gradient of the last backward() target with respect to a non-parameter node.
  const Tensor2& grad(Var v) const;

  // y = x W^T + b for each row of x. `b` may be an invalid Var.
  Var affine(Var x, Var w, Var b = {});
  // Rows of `table` selected by `rows`, one per batch entry.
  Var lookup(Var table, std::span<const int> rows);
  // Column-wise concatenation; all parts share a row count.
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  // z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r),
  // n = tanh(W_n x + r * (U_n h) + b_n), h' = (1 - z) * n + z * h.
  // Rows with mask 0 pass h through unchanged; an empty mask means all active.
  Var gru_step(Var x, Var h, const GruVars& w, std::span<const double> mask = {});
  // Per-row -weight * log(softmax(logits)[target]), returned as B x 1.
  Var softmax_xent(Var logits, std::span<const int> targets, std::span<const double> weights);
  // Per-row wrapped absolute error on a unit circle: |d - round(d)| with
  // d = pred - target. `pred` is B x 1.
  Var circular_abs_error(Var pred, std::span<const double> targets);
  Var sum(Var v);   // 1 x 1
  Var mean(Var v);  // 1 x 1
  // Sum of coefficient * term over 1 x 1 terms.
  Var weighted_sum(std::span<const std::pair<double, Var>> terms);
  Var add(Var a, Var b);
  Var scale(Var v, double factor);

  // Accumulates d(loss)/d(theta) into the ParamStore. Repeated calls add up.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    const Tensor2* external = nullptr;  // parameter value
    std::optional<ParamId> param;
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };

  const Tensor2& val(std::size_t id) const;
  Tensor2& grad_slot(std::size_t id);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Var push(Tensor2 value, bool needs_grad, std::function<void(Tape&, std::size_t)> backward);
  void check(Var v) const;

  ParamStore* params_;
  std::vector<Node> nodes_;
};

// Row-wise softmax with max subtraction.
Tensor2 softmax_rows(const Tensor2& logits);

}  // namespace cslsl::grad
