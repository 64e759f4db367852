#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cslsl/geo.hpp"
#include "cslsl/model.hpp"
#include "cslsl/trainer.hpp"

namespace cslsl::evaluate {

// Indices of the n largest logits, descending, lower index first on ties.
std::vector<int> top_n(std::span<const double> logits, std::size_t n);
// 0-based position of `target` in the full ranking top_n would produce.
std::size_t rank_of(std::span<const double> logits, int target);

struct Prediction {
  int user = 0;
  int target_loc = 0;
  int target_cat = 0;
  int current_loc = 0;
  std::vector<int> top_locs;   // best first, min(keep, |L|) entries
  std::size_t loc_rank = 0;    // rank of target_loc
  // Category ranking from the category head, or from the location ranking
  // mapped to categories when the variant has no category head.
  int top1_cat = -1;
  std::size_t cat_rank = 0;
  int top1_loc() const { return top_locs.front(); }
};

std::vector<Prediction> predict(const model::Model& m, const preprocess::ProcessedDataset& ds,
                                std::span<const trainer::TrainingInstance> instances, std::size_t batch_size = 64,
                                std::size_t keep = 10);

struct RecallResult {
  double mean = 0.0;             // averaged per user, then across users
  double record_weighted = 0.0;  // averaged over instances
  std::map<int, double> per_user;
  std::size_t users_excluded = 0;  // users without instances
  std::size_t instances = 0;
};

// `hits[k]` says whether instance k counts as a hit for user users[k].
RecallResult recall_from_hits(std::span<const int> users, const std::vector<bool>& hits, std::size_t num_users);
// Ranked lists must hold at least n entries.
RecallResult recall_at_n(std::span<const std::vector<int>> ranked, std::span<const int> targets,
                         std::span<const int> users, std::size_t n, std::size_t num_users);
RecallResult location_recall(std::span<const Prediction> preds, std::size_t n, std::size_t num_users);
RecallResult category_recall(std::span<const Prediction> preds, std::size_t n, std::size_t num_users);

// Fractions over (category correct?) x (location correct?) at rank 1:
// [0] both, [1] category only, [2] location only, [3] neither.
struct JointMatrix {
  double both = 0.0;
  double cat_only = 0.0;
  double loc_only = 0.0;
  double neither = 0.0;
  double sum() const { return both + cat_only + loc_only + neither; }
};
JointMatrix joint_causal_analysis(std::span<const Prediction> preds);

// Bins are [e_i, e_{i+1}); the last bin also takes its right edge.
struct Histogram {
  std::vector<double> edges;
  std::vector<double> counts;
  double underflow = 0.0;
  double overflow = 0.0;
  bool normalized = false;

  static Histogram from_edges(std::vector<double> edges);
  static Histogram linear(double lo, double hi, std::size_t bins);
  static Histogram log_spaced(double lo, double hi, std::size_t bins);
  void add(double x, double weight = 1.0);
  double total() const;
  // Divides every count (underflow and overflow included) by total().
  void normalize();
  void write_csv(std::ostream& out) const;
};

Histogram pred_target_distance_hist(std::span<const Prediction> preds, std::span<const geo::GeoPoint> coords,
                                    std::vector<double> edges);

struct Displacement {
  Histogram predicted;
  Histogram actual;
};
Displacement displacement_comparison(std::span<const Prediction> preds, std::span<const geo::GeoPoint> coords,
                                     double lo_km = 0.1, double hi_km = 100.0, std::size_t bins = 30);

struct GridCount {
  geo::GridCell cell;
  long predicted = 0;
  long actual = 0;
  long abs_error() const { return predicted > actual ? predicted - actual : actual - predicted; }
};
struct AttractivenessTable {
  geo::GridSpec grid;
  std::vector<GridCount> cells;        // sorted by (row, col), visited cells only
  std::map<long, long> error_counts;   // abs_error -> number of cells
};
AttractivenessTable attractiveness_error(std::span<const Prediction> preds, std::span<const geo::GeoPoint> coords,
                                         const geo::GridSpec& grid);
void write_csv(std::ostream& out, const AttractivenessTable& table);

struct MetricsReport {
  std::map<int, double> recall_loc;
  std::map<int, double> recall_loc_record;
  std::optional<std::map<int, double>> recall_cat;
  std::optional<std::map<int, double>> recall_cat_record;
  std::optional<JointMatrix> joint;
  std::map<int, double> per_user_recall1;
  std::size_t users_excluded = 0;
  std::size_t instances = 0;
  double mean_pred_target_km = 0.0;
};

MetricsReport make_report(std::span<const Prediction> preds, const preprocess::ProcessedDataset& ds,
                          std::span<const geo::GeoPoint> coords);
nlohmann::ordered_json to_json(const MetricsReport& report);

struct SweepPoint {
  objective::LossWeights weights;
  std::vector<double> recall1;  // one per seed
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single seed
};

// Trains one model per (weights, seed) from scratch and scores location
// Recall@1 with the best-epoch parameters.
std::vector<SweepPoint> sensitivity_sweep(const preprocess::ProcessedDataset& ds, const model::ModelConfig& cfg,
                                          const trainer::TrainerOptions& base,
                                          std::span<const objective::LossWeights> grid,
                                          std::span<const std::uint64_t> seeds);

}  // namespace cslsl::evaluate
