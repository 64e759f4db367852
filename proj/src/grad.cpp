#include "cslsl/grad.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cslsl::grad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) {
    throw std::invalid_argument(what);
  }
}

std::string shape(const Tensor2& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

Tensor2 sigmoid(const Tensor2& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

}  // namespace

Tensor2 softmax_rows(const Tensor2& logits) {
  Tensor2 p(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const double m = logits.row(b).maxCoeff();
    p.row(b) = (logits.row(b).array() - m).exp().matrix();
    p.row(b) /= p.row(b).sum();
  }
  return p;
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw std::invalid_argument("variable does not belong to this tape");
  }
}

const Tensor2& Tape::val(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

const Tensor2& Tape::value(Var v) const {
  check(v);
  return val(v.id);
}

const Tensor2& Tape::grad(Var v) const {
  check(v);
  if (nodes_[v.id].param) {
    throw std::invalid_argument("parameter gradients live in the ParamStore");
  }
  return nodes_[v.id].grad;
}

Tensor2& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.param) {
    return (*params_)[*n.param].grad;
  }
  if (n.grad.size() == 0) {
    const Tensor2& v = val(id);
    n.grad = Tensor2::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Var Tape::push(Tensor2 value, bool needs_grad, std::function<void(Tape&, std::size_t)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) {
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Var Tape::constant(Tensor2 value) { return push(std::move(value), false, nullptr); }

Var Tape::input(Tensor2 value) { return push(std::move(value), true, nullptr); }

Var Tape::param(ParamId id) {
  require(params_ != nullptr, "tape has no parameter store");
  Node n;
  n.external = &(*params_)[id].value;
  n.param = id;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

GruVars Tape::gru_params(ParamId w, ParamId u, ParamId b) { return {param(w), param(u), param(b)}; }

Var Tape::affine(Var x, Var w, Var b) {
  check(x);
  check(w);
  const Tensor2& xv = val(x.id);
  const Tensor2& wv = val(w.id);
  if (xv.cols() != wv.cols()) {
    throw std::invalid_argument("affine: x is " + shape(xv) + ", W is " + shape(wv));
  }
  Tensor2 y = xv * wv.transpose();
  if (b.valid()) {
    check(b);
    const Tensor2& bv = val(b.id);
    if (bv.rows() != 1 || bv.cols() != wv.rows()) {
      throw std::invalid_argument("affine: bias is " + shape(bv) + ", W is " + shape(wv));
    }
    y.rowwise() += bv.row(0);
  }
  const bool ng = needs(x) || needs(w) || (b.valid() && needs(b));
  return push(std::move(y), ng, [x, w, b](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    if (t.needs(x)) {
      t.grad_slot(x.id).noalias() += g * t.val(w.id);
    }
    if (t.needs(w)) {
      t.grad_slot(w.id).noalias() += g.transpose() * t.val(x.id);
    }
    if (b.valid() && t.needs(b)) {
      t.grad_slot(b.id) += g.colwise().sum();
    }
  });
}

Var Tape::lookup(Var table, std::span<const int> rows) {
  check(table);
  const Tensor2& tv = val(table.id);
  Tensor2 y(static_cast<Eigen::Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tv.rows()) {
      throw std::out_of_range("lookup: index " + std::to_string(rows[i]) + " outside table of " +
                              std::to_string(tv.rows()) + " rows");
    }
    y.row(static_cast<Eigen::Index>(i)) = tv.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return push(std::move(y), needs(table), [table, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    Tensor2& slot = t.grad_slot(table.id);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      slot.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var Tape::concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat: no parts");
  Eigen::Index rows = -1;
  Eigen::Index cols = 0;
  bool ng = false;
  for (const Var p : parts) {
    check(p);
    const Tensor2& v = val(p.id);
    if (rows >= 0 && v.rows() != rows) {
      throw std::invalid_argument("concat: row counts differ");
    }
    rows = v.rows();
    cols += v.cols();
    ng = ng || needs(p);
  }
  Tensor2 y(rows, cols);
  Eigen::Index offset = 0;
  for (const Var p : parts) {
    const Tensor2& v = val(p.id);
    y.middleCols(offset, v.cols()) = v;
    offset += v.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(y), ng, [ps = std::move(ps)](Tape& t, std::size_t self) {
    Eigen::Index off = 0;
    for (const Var p : ps) {
      const Eigen::Index c = t.val(p.id).cols();
      if (t.needs(p)) {
        t.grad_slot(p.id) += t.nodes_[self].grad.middleCols(off, c);
      }
      off += c;
    }
  });
}

Var Tape::gru_step(Var x, Var h, const GruVars& w, std::span<const double> mask) {
  check(x);
  check(h);
  check(w.w);
  check(w.u);
  check(w.b);
  const Tensor2& xv = val(x.id);
  const Tensor2& hv = val(h.id);
  const Tensor2& wv = val(w.w.id);
  const Tensor2& uv = val(w.u.id);
  const Tensor2& bv = val(w.b.id);
  const Eigen::Index H = hv.cols();
  const Eigen::Index B = hv.rows();
  if (xv.rows() != B || wv.rows() != 3 * H || wv.cols() != xv.cols() || uv.rows() != 3 * H || uv.cols() != H ||
      bv.rows() != 1 || bv.cols() != 3 * H) {
    throw std::invalid_argument("gru_step: x " + shape(xv) + ", h " + shape(hv) + ", W " + shape(wv) + ", U " +
                                shape(uv) + ", b " + shape(bv));
  }
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != B) {
    throw std::invalid_argument("gru_step: mask length differs from batch size");
  }

  Tensor2 gx = xv * wv.transpose();
  gx.rowwise() += bv.row(0);
  const Tensor2 gh = hv * uv.transpose();
  Tensor2 z = sigmoid(gx.leftCols(H) + gh.leftCols(H));
  Tensor2 r = sigmoid(gx.middleCols(H, H) + gh.middleCols(H, H));
  Tensor2 ghn = gh.rightCols(H);
  Tensor2 n = (gx.rightCols(H).array() + r.array() * ghn.array()).tanh().matrix();
  Tensor2 out = ((1.0 - z.array()) * n.array() + z.array() * hv.array()).matrix();
  std::vector<char> active(static_cast<std::size_t>(B), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0.0) {
      active[i] = 0;
      out.row(static_cast<Eigen::Index>(i)) = hv.row(static_cast<Eigen::Index>(i));
    }
  }

  const bool ng = needs(x) || needs(h) || needs(w.w) || needs(w.u) || needs(w.b);
  return push(std::move(out), ng,
              [x, h, w, H, z = std::move(z), r = std::move(r), n = std::move(n), ghn = std::move(ghn),
               active = std::move(active)](Tape& t, std::size_t self) {
                const Tensor2& g = t.nodes_[self].grad;
                const Tensor2& hv = t.val(h.id);
                Tensor2 dh_new = g;
                for (std::size_t i = 0; i < active.size(); ++i) {
                  if (!active[i]) {
                    dh_new.row(static_cast<Eigen::Index>(i)).setZero();
                  }
                }
                const auto dz = dh_new.array() * (hv.array() - n.array());
                const auto dn = dh_new.array() * (1.0 - z.array());
                const Tensor2 dn_pre = (dn * (1.0 - n.array().square())).matrix();
                const Tensor2 dr_pre =
                    (dn_pre.array() * ghn.array() * r.array() * (1.0 - r.array())).matrix();
                const Tensor2 dz_pre = (dz * z.array() * (1.0 - z.array())).matrix();

                Tensor2 dgx(dh_new.rows(), 3 * H);
                dgx << dz_pre, dr_pre, dn_pre;
                Tensor2 dgh(dh_new.rows(), 3 * H);
                dgh << dz_pre, dr_pre, (dn_pre.array() * r.array()).matrix();

                if (t.needs(x)) {
                  t.grad_slot(x.id).noalias() += dgx * t.val(w.w.id);
                }
                if (t.needs(w.w)) {
                  t.grad_slot(w.w.id).noalias() += dgx.transpose() * t.val(x.id);
                }
                if (t.needs(w.b)) {
                  t.grad_slot(w.b.id) += dgx.colwise().sum();
                }
                if (t.needs(w.u)) {
                  t.grad_slot(w.u.id).noalias() += dgh.transpose() * hv;
                }
                if (t.needs(h)) {
                  Tensor2 dh = (dh_new.array() * z.array()).matrix();
                  dh.noalias() += dgh * t.val(w.u.id);
                  for (std::size_t i = 0; i < active.size(); ++i) {
                    if (!active[i]) {
                      dh.row(static_cast<Eigen::Index>(i)) = g.row(static_cast<Eigen::Index>(i));
                    }
                  }
                  t.grad_slot(h.id) += dh;
                }
              });
}

Var Tape::softmax_xent(Var logits, std::span<const int> targets, std::span<const double> weights) {
  check(logits);
  const Tensor2& lv = val(logits.id);
  const auto B = static_cast<std::size_t>(lv.rows());
  if (targets.size() != B || weights.size() != B) {
    throw std::invalid_argument("softmax_xent: targets/weights length differs from batch size");
  }
  Tensor2 probs = softmax_rows(lv);
  Tensor2 loss(lv.rows(), 1);
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    if (targets[b] < 0 || targets[b] >= lv.cols()) {
      throw std::out_of_range("softmax_xent: target out of range");
    }
    if (!(weights[b] >= 0.0)) {
      throw std::invalid_argument("softmax_xent: negative weight");
    }
    const double m = lv.row(row).maxCoeff();
    const double lse = m + std::log((lv.row(row).array() - m).exp().sum());
    loss(row, 0) = weights[b] == 0.0 ? 0.0 : weights[b] * (lse - lv(row, targets[b]));
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> wt(weights.begin(), weights.end());
  return push(std::move(loss), needs(logits),
              [logits, probs = std::move(probs), tg = std::move(tg), wt = std::move(wt)](Tape& t, std::size_t self) {
                const Tensor2& g = t.nodes_[self].grad;
                Tensor2& slot = t.grad_slot(logits.id);
                for (std::size_t b = 0; b < tg.size(); ++b) {
                  const auto row = static_cast<Eigen::Index>(b);
                  const double scale = g(row, 0) * wt[b];
                  if (scale == 0.0) {
                    continue;
                  }
                  slot.row(row) += scale * probs.row(row);
                  slot(row, tg[b]) -= scale;
                }
              });
}

Var Tape::circular_abs_error(Var pred, std::span<const double> targets) {
  check(pred);
  const Tensor2& pv = val(pred.id);
  if (pv.cols() != 1 || static_cast<std::size_t>(pv.rows()) != targets.size()) {
    throw std::invalid_argument("circular_abs_error: prediction must be B x 1");
  }
  Tensor2 out(pv.rows(), 1);
  std::vector<double> sign(targets.size());
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const double d = pv(static_cast<Eigen::Index>(b), 0) - targets[b];
    const double wrapped = d - std::round(d);
    out(static_cast<Eigen::Index>(b), 0) = std::abs(wrapped);
    sign[b] = wrapped > 0.0 ? 1.0 : (wrapped < 0.0 ? -1.0 : 0.0);
  }
  return push(std::move(out), needs(pred), [pred, sign = std::move(sign)](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    Tensor2& slot = t.grad_slot(pred.id);
    for (std::size_t b = 0; b < sign.size(); ++b) {
      slot(static_cast<Eigen::Index>(b), 0) += g(static_cast<Eigen::Index>(b), 0) * sign[b];
    }
  });
}

Var Tape::sum(Var v) {
  check(v);
  Tensor2 out(1, 1);
  out(0, 0) = val(v.id).sum();
  return push(std::move(out), needs(v), [v](Tape& t, std::size_t self) {
    t.grad_slot(v.id).array() += t.nodes_[self].grad(0, 0);
  });
}

Var Tape::mean(Var v) {
  check(v);
  const auto n = static_cast<double>(val(v.id).size());
  require(n > 0, "mean: empty tensor");
  Tensor2 out(1, 1);
  out(0, 0) = val(v.id).sum() / n;
  return push(std::move(out), needs(v), [v, n](Tape& t, std::size_t self) {
    t.grad_slot(v.id).array() += t.nodes_[self].grad(0, 0) / n;
  });
}

Var Tape::weighted_sum(std::span<const std::pair<double, Var>> terms) {
  Tensor2 out = Tensor2::Zero(1, 1);
  bool ng = false;
  for (const auto& [c, v] : terms) {
    check(v);
    require(val(v.id).size() == 1, "weighted_sum: terms must be scalars");
    out(0, 0) += c * val(v.id)(0, 0);
    ng = ng || needs(v);
  }
  std::vector<std::pair<double, Var>> ts(terms.begin(), terms.end());
  return push(std::move(out), ng, [ts = std::move(ts)](Tape& t, std::size_t self) {
    for (const auto& [c, v] : ts) {
      if (t.needs(v)) {
        t.grad_slot(v.id)(0, 0) += c * t.nodes_[self].grad(0, 0);
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  require(val(a.id).rows() == val(b.id).rows() && val(a.id).cols() == val(b.id).cols(), "add: shape mismatch");
  return push(val(a.id) + val(b.id), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    if (t.needs(a)) {
      t.grad_slot(a.id) += t.nodes_[self].grad;
    }
    if (t.needs(b)) {
      t.grad_slot(b.id) += t.nodes_[self].grad;
    }
  });
}

Var Tape::scale(Var v, double factor) {
  check(v);
  return push(val(v.id) * factor, needs(v), [v, factor](Tape& t, std::size_t self) {
    t.grad_slot(v.id) += factor * t.nodes_[self].grad;
  });
}

void Tape::backward(Var loss) {
  check(loss);
  if (val(loss.id).size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " + shape(val(loss.id)));
  }
  for (auto& n : nodes_) {
    if (!n.param) {
      n.grad.resize(0, 0);
    }
  }
  if (!nodes_[loss.id].needs_grad) {
    return;
  }
  grad_slot(loss.id)(0, 0) += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) {
      n.backward(*this, i);
    }
  }
}

}  // namespace cslsl::grad
