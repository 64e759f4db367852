#include "cslsl/objective.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace cslsl::objective {

using grad::Tensor2;
using grad::Var;

void validate(const LossWeights& w) {
  const std::pair<const char*, double> all[] = {
      {"lambda_t", w.lambda_t}, {"lambda_c", w.lambda_c}, {"lambda_s", w.lambda_s}};
  for (const auto& [name, value] : all) {
    if (!std::isfinite(value) || value < 0.0) {
      throw std::invalid_argument(std::string(name) + " must be finite and non-negative");
    }
  }
}

int argmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw std::invalid_argument("argmax of an empty vector");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) {
      best = i;
    }
  }
  return static_cast<int>(best);
}

namespace {

double log_softmax_at(std::span<const double> logits, int k) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  return logits[static_cast<std::size_t>(k)] - mx - std::log(s);
}

std::span<const double> row(const Tensor2& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

std::vector<double> spatial_coefficients(const Tensor2& loc_logits, std::span<const int> targets,
                                         std::span<const geo::GeoPoint> coords) {
  std::vector<double> d(targets.size());
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const int pred = argmax(row(loc_logits, static_cast<Eigen::Index>(b)));
    d[b] = pred == targets[b] ? 0.0
                              : geo::haversine_km(coords[static_cast<std::size_t>(pred)],
                                                  coords[static_cast<std::size_t>(targets[b])]);
  }
  return d;
}

void finish(LossBreakdown& l, const LossWeights& w) {
  l.total = l.l_l + w.lambda_t * l.l_t + w.lambda_c * l.l_c + w.lambda_s * l.l_s;
}

}  // namespace

double spatial_loss(std::span<const double> loc_logits, int true_loc, std::span<const geo::GeoPoint> coords) {
  const int pred = argmax(loc_logits);
  if (pred == true_loc) {
    return 0.0;
  }
  const double d = geo::haversine_km(coords[static_cast<std::size_t>(pred)], coords[static_cast<std::size_t>(true_loc)]);
  return d * -log_softmax_at(loc_logits, true_loc);
}

double circular_error(double pred, double target) {
  const double d = pred - target;
  return std::abs(d - std::round(d));
}

LossBreakdown total_loss(const model::BranchState& state, const model::Batch& batch, const LossWeights& w,
                         model::Variant variant, std::span<const geo::GeoPoint> coords) {
  LossBreakdown l;
  const std::size_t B = batch.size();
  if (B == 0) {
    return l;
  }
  const double inv = 1.0 / static_cast<double>(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto r = static_cast<Eigen::Index>(b);
    l.l_l -= log_softmax_at(row(state.loc_logits, r), batch.target_loc[b]) * inv;
    if (model::uses_spatial_loss(variant)) {
      l.l_s += spatial_loss(row(state.loc_logits, r), batch.target_loc[b], coords) * inv;
    }
    if (model::has_category_head(variant)) {
      l.l_c -= log_softmax_at(row(state.cat_logits, r), batch.target_cat[b]) * inv;
    }
    if (model::has_time_head(variant)) {
      l.l_t += circular_error(state.t_hat(r, 0), batch.target_time[b]) * inv;
    }
  }
  finish(l, w);
  return l;
}

LossGraph build_loss(grad::Tape& tape, const model::Outputs& out, const model::Batch& batch, const LossWeights& w,
                     model::Variant variant, std::span<const geo::GeoPoint> coords) {
  const std::vector<double> ones(batch.size(), 1.0);
  LossGraph g;
  std::vector<std::pair<double, Var>> terms;

  const Var l_l = tape.mean(tape.softmax_xent(out.loc_logits, batch.target_loc, ones));
  g.values.l_l = tape.value(l_l)(0, 0);
  terms.emplace_back(1.0, l_l);

  if (model::has_time_head(variant)) {
    const Var l_t = tape.mean(tape.circular_abs_error(out.t_hat, batch.target_time));
    g.values.l_t = tape.value(l_t)(0, 0);
    if (w.lambda_t != 0.0) terms.emplace_back(w.lambda_t, l_t);
  }
  if (model::has_category_head(variant)) {
    const Var l_c = tape.mean(tape.softmax_xent(out.cat_logits, batch.target_cat, ones));
    g.values.l_c = tape.value(l_c)(0, 0);
    if (w.lambda_c != 0.0) terms.emplace_back(w.lambda_c, l_c);
  }
  if (model::uses_spatial_loss(variant)) {
    const std::vector<double> d = spatial_coefficients(tape.value(out.loc_logits), batch.target_loc, coords);
    if (w.lambda_s != 0.0) {
      const Var l_s = tape.mean(tape.softmax_xent(out.loc_logits, batch.target_loc, d));
      g.values.l_s = tape.value(l_s)(0, 0);
      terms.emplace_back(w.lambda_s, l_s);
    } else {
      const Tensor2& logits = tape.value(out.loc_logits);
      for (std::size_t b = 0; b < d.size(); ++b) {
        if (d[b] != 0.0) {
          g.values.l_s -= d[b] * log_softmax_at(row(logits, static_cast<Eigen::Index>(b)), batch.target_loc[b]);
        }
      }
      g.values.l_s /= static_cast<double>(d.size());
    }
  }
  g.total = tape.weighted_sum(terms);
  finish(g.values, w);
  return g;
}

}  // namespace cslsl::objective
