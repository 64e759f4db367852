#pragma once

#include <span>
#include <stdexcept>

#include "cslsl/geo.hpp"
#include "cslsl/grad.hpp"
#include "cslsl/model.hpp"

namespace cslsl::objective {

struct LossWeights {
  double lambda_t = 10.0;
  double lambda_c = 10.0;
  double lambda_s = 10.0;
};

// Throws std::invalid_argument on a negative or non-finite weight.
void validate(const LossWeights& w);

// Batch means of each component. Components of absent heads are 0.
struct LossBreakdown {
  double l_l = 0.0;
  double l_t = 0.0;
  double l_c = 0.0;
  double l_s = 0.0;
  double total = 0.0;
};

// Index of the largest logit, lowest index on ties.
int argmax(std::span<const double> logits);

// haversine(coord[argmax], coord[true_loc]) * -log softmax(logits)[true_loc].
double spatial_loss(std::span<const double> loc_logits, int true_loc, std::span<const geo::GeoPoint> coords);

// Shortest distance between two points of the unit circle [0, 1).
double circular_error(double pred, double target);

// Loss of a forward pass in value form.
LossBreakdown total_loss(const model::BranchState& state, const model::Batch& batch, const LossWeights& w,
                         model::Variant variant, std::span<const geo::GeoPoint> coords);

struct LossGraph {
  grad::Var total;
  LossBreakdown values;
};

// Builds L_total on the tape. The spatial coefficient is computed from the
// current logits and enters as a constant. Zero-weight terms are left out of
// the graph, so lambda_s = 0 gives the same graph as a variant without the
// spatial term.
LossGraph build_loss(grad::Tape& tape, const model::Outputs& out, const model::Batch& batch, const LossWeights& w,
                     model::Variant variant, std::span<const geo::GeoPoint> coords);

}  // namespace cslsl::objective
