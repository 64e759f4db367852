#include "cslsl/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace cslsl::evaluate {

using grad::Tensor2;

namespace {

std::span<const double> row(const Tensor2& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

bool ranks_before(std::span<const double> logits, int a, int b) {
  const double la = logits[static_cast<std::size_t>(a)];
  const double lb = logits[static_cast<std::size_t>(b)];
  return la > lb || (la == lb && a < b);
}

}  // namespace

std::vector<int> top_n(std::span<const double> logits, std::size_t n) {
  n = std::min(n, logits.size());
  std::vector<int> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto cmp = [&](int a, int b) { return ranks_before(logits, a, b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), cmp);
  idx.resize(n);
  return idx;
}

std::size_t rank_of(std::span<const double> logits, int target) {
  std::size_t rank = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (ranks_before(logits, static_cast<int>(i), target)) {
      ++rank;
    }
  }
  return rank;
}

std::vector<Prediction> predict(const model::Model& m, const preprocess::ProcessedDataset& ds,
                                std::span<const trainer::TrainingInstance> instances, std::size_t batch_size,
                                std::size_t keep) {
  if (batch_size == 0) {
    throw std::invalid_argument("batch_size must be positive");
  }
  const bool cat_head = model::has_category_head(m.config().variant);
  const auto& loc_cat = ds.vocab.location_category;
  std::vector<Prediction> out;
  out.reserve(instances.size());
  for (std::size_t start = 0; start < instances.size(); start += batch_size) {
    const auto chunk = instances.subspan(start, std::min(batch_size, instances.size() - start));
    const model::Batch batch = trainer::make_batch(ds, chunk);
    const model::BranchState state = m.run(batch);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const auto r = static_cast<Eigen::Index>(b);
      const auto logits = row(state.loc_logits, r);
      Prediction p;
      p.user = batch.user[b];
      p.target_loc = batch.target_loc[b];
      p.target_cat = batch.target_cat[b];
      p.current_loc = batch.current_loc[b];
      p.top_locs = top_n(logits, keep);
      p.loc_rank = rank_of(logits, p.target_loc);
      if (cat_head) {
        const auto cat_logits = row(state.cat_logits, r);
        p.top1_cat = top_n(cat_logits, 1).front();
        p.cat_rank = rank_of(cat_logits, p.target_cat);
      } else {
        // Distinct categories in the order their best location appears.
        std::vector<bool> seen(static_cast<std::size_t>(ds.vocab.num_categories()), false);
        std::size_t distinct = 0;
        p.cat_rank = seen.size();
        for (int loc : top_n(logits, logits.size())) {
          const int c = loc_cat[static_cast<std::size_t>(loc)];
          if (seen[static_cast<std::size_t>(c)]) continue;
          seen[static_cast<std::size_t>(c)] = true;
          if (distinct == 0) p.top1_cat = c;
          if (c == p.target_cat) {
            p.cat_rank = distinct;
            break;
          }
          ++distinct;
        }
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

RecallResult recall_from_hits(std::span<const int> users, const std::vector<bool>& hits, std::size_t num_users) {
  if (users.size() != hits.size()) {
    throw std::invalid_argument("recall: users and hits differ in length");
  }
  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // user -> (hits, total)
  std::size_t total_hits = 0;
  for (std::size_t k = 0; k < users.size(); ++k) {
    auto& t = tally[users[k]];
    t.first += hits[k] ? 1 : 0;
    ++t.second;
    total_hits += hits[k] ? 1 : 0;
  }
  RecallResult r;
  r.instances = users.size();
  r.users_excluded = num_users > tally.size() ? num_users - tally.size() : 0;
  double sum = 0.0;
  for (const auto& [user, t] : tally) {
    const double v = static_cast<double>(t.first) / static_cast<double>(t.second);
    r.per_user[user] = v;
    sum += v;
  }
  if (!tally.empty()) {
    r.mean = sum / static_cast<double>(tally.size());
    r.record_weighted = static_cast<double>(total_hits) / static_cast<double>(users.size());
  }
  return r;
}

RecallResult recall_at_n(std::span<const std::vector<int>> ranked, std::span<const int> targets,
                         std::span<const int> users, std::size_t n, std::size_t num_users) {
  if (ranked.size() != targets.size() || ranked.size() != users.size()) {
    throw std::invalid_argument("recall: ranked lists, targets and users differ in length");
  }
  std::vector<bool> hits(ranked.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k].size() < n) {
      throw std::invalid_argument("recall: ranked list shorter than N");
    }
    hits[k] = std::find(ranked[k].begin(), ranked[k].begin() + static_cast<std::ptrdiff_t>(n), targets[k]) !=
              ranked[k].begin() + static_cast<std::ptrdiff_t>(n);
  }
  return recall_from_hits(users, hits, num_users);
}

namespace {

RecallResult recall_by_rank(std::span<const Prediction> preds, std::size_t n, std::size_t num_users,
                            std::size_t Prediction::*rank) {
  std::vector<int> users;
  std::vector<bool> hits;
  for (const auto& p : preds) {
    users.push_back(p.user);
    hits.push_back(p.*rank < n);
  }
  return recall_from_hits(users, hits, num_users);
}

}  // namespace

RecallResult location_recall(std::span<const Prediction> preds, std::size_t n, std::size_t num_users) {
  return recall_by_rank(preds, n, num_users, &Prediction::loc_rank);
}

RecallResult category_recall(std::span<const Prediction> preds, std::size_t n, std::size_t num_users) {
  return recall_by_rank(preds, n, num_users, &Prediction::cat_rank);
}

JointMatrix joint_causal_analysis(std::span<const Prediction> preds) {
  JointMatrix j;
  if (preds.empty()) {
    return j;
  }
  std::size_t counts[4] = {0, 0, 0, 0};
  for (const auto& p : preds) {
    const bool cat_ok = p.top1_cat == p.target_cat;
    const bool loc_ok = p.top1_loc() == p.target_loc;
    ++counts[cat_ok ? (loc_ok ? 0 : 1) : (loc_ok ? 2 : 3)];
  }
  const double n = static_cast<double>(preds.size());
  j.both = static_cast<double>(counts[0]) / n;
  j.cat_only = static_cast<double>(counts[1]) / n;
  j.loc_only = static_cast<double>(counts[2]) / n;
  j.neither = static_cast<double>(counts[3]) / n;
  return j;
}

Histogram Histogram::from_edges(std::vector<double> edges) {
  if (edges.size() < 2) {
    throw std::invalid_argument("histogram needs at least two edges");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw std::invalid_argument("histogram edges must be strictly increasing");
    }
  }
  Histogram h;
  h.counts.assign(edges.size() - 1, 0.0);
  h.edges = std::move(edges);
  return h;
}

Histogram Histogram::linear(double lo, double hi, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  e.back() = hi;
  return from_edges(std::move(e));
}

Histogram Histogram::log_spaced(double lo, double hi, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  if (!(lo > 0.0)) throw std::invalid_argument("log-spaced histogram needs a positive lower edge");
  std::vector<double> e(bins + 1);
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (std::size_t i = 0; i <= bins; ++i) {
    e[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(bins));
  }
  e.front() = lo;
  e.back() = hi;
  return from_edges(std::move(e));
}

void Histogram::add(double x, double weight) {
  if (x < edges.front()) {
    underflow += weight;
    return;
  }
  if (x > edges.back()) {
    overflow += weight;
    return;
  }
  auto it = std::upper_bound(edges.begin(), edges.end(), x);
  std::size_t bin = static_cast<std::size_t>(it - edges.begin()) - 1;
  bin = std::min(bin, counts.size() - 1);
  counts[bin] += weight;
}

double Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), underflow + overflow);
}

void Histogram::normalize() {
  const double t = total();
  if (t > 0.0) {
    for (double& c : counts) c /= t;
    underflow /= t;
    overflow /= t;
  }
  normalized = true;
}

void Histogram::write_csv(std::ostream& out) const {
  out << "lo,hi,value\n";
  out.precision(17);
  out << "-inf," << edges.front() << "," << underflow << "\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out << edges[i] << "," << edges[i + 1] << "," << counts[i] << "\n";
  }
  out << edges.back() << ",inf," << overflow << "\n";
}

namespace {

double dist(std::span<const geo::GeoPoint> coords, int a, int b) {
  if (a == b) return 0.0;
  return geo::haversine_km(coords[static_cast<std::size_t>(a)], coords[static_cast<std::size_t>(b)]);
}

}  // namespace

Histogram pred_target_distance_hist(std::span<const Prediction> preds, std::span<const geo::GeoPoint> coords,
                                    std::vector<double> edges) {
  Histogram h = Histogram::from_edges(std::move(edges));
  for (const auto& p : preds) {
    h.add(dist(coords, p.top1_loc(), p.target_loc));
  }
  return h;
}

Displacement displacement_comparison(std::span<const Prediction> preds, std::span<const geo::GeoPoint> coords,
                                     double lo_km, double hi_km, std::size_t bins) {
  Displacement d{Histogram::log_spaced(lo_km, hi_km, bins), Histogram::log_spaced(lo_km, hi_km, bins)};
  for (const auto& p : preds) {
    d.predicted.add(dist(coords, p.current_loc, p.top1_loc()));
    d.actual.add(dist(coords, p.current_loc, p.target_loc));
  }
  d.predicted.normalize();
  d.actual.normalize();
  return d;
}

AttractivenessTable attractiveness_error(std::span<const Prediction> preds, std::span<const geo::GeoPoint> coords,
                                         const geo::GridSpec& grid) {
  std::map<geo::GridCell, GridCount> cells;
  auto cell_of = [&](int loc) { return geo::grid_index(coords[static_cast<std::size_t>(loc)], grid); };
  for (const auto& p : preds) {
    const auto pc = cell_of(p.top1_loc());
    auto& predicted = cells[pc];
    predicted.cell = pc;
    ++predicted.predicted;
    const auto ac = cell_of(p.target_loc);
    auto& actual = cells[ac];
    actual.cell = ac;
    ++actual.actual;
  }
  AttractivenessTable t;
  t.grid = grid;
  for (const auto& [cell, count] : cells) {
    t.cells.push_back(count);
    ++t.error_counts[count.abs_error()];
  }
  return t;
}

void write_csv(std::ostream& out, const AttractivenessTable& table) {
  out << "row,col,predicted,actual,abs_error\n";
  for (const auto& c : table.cells) {
    out << c.cell.row << "," << c.cell.col << "," << c.predicted << "," << c.actual << "," << c.abs_error() << "\n";
  }
}

MetricsReport make_report(std::span<const Prediction> preds, const preprocess::ProcessedDataset& ds,
                          std::span<const geo::GeoPoint> coords) {
  MetricsReport r;
  const std::size_t num_users = ds.users.size();
  for (int n : {1, 5, 10}) {
    const auto lr = location_recall(preds, static_cast<std::size_t>(n), num_users);
    r.recall_loc[n] = lr.mean;
    r.recall_loc_record[n] = lr.record_weighted;
    if (n == 1) {
      r.per_user_recall1 = lr.per_user;
      r.users_excluded = lr.users_excluded;
      r.instances = lr.instances;
    }
  }
  if (ds.vocab.has_categories) {
    r.recall_cat.emplace();
    r.recall_cat_record.emplace();
    for (int n : {1, 5, 10}) {
      const auto cr = category_recall(preds, static_cast<std::size_t>(n), num_users);
      (*r.recall_cat)[n] = cr.mean;
      (*r.recall_cat_record)[n] = cr.record_weighted;
    }
    r.joint = joint_causal_analysis(preds);
  }
  double sum = 0.0;
  for (const auto& p : preds) {
    sum += dist(coords, p.top1_loc(), p.target_loc);
  }
  r.mean_pred_target_km = preds.empty() ? 0.0 : sum / static_cast<double>(preds.size());
  return r;
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  auto recall_map = [](const std::map<int, double>& m) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [n, v] : m) j["@" + std::to_string(n)] = v;
    return j;
  };
  nlohmann::ordered_json j;
  j["instances"] = report.instances;
  j["users_excluded"] = report.users_excluded;
  j["recall_location"] = recall_map(report.recall_loc);
  j["recall_location_record_weighted"] = recall_map(report.recall_loc_record);
  if (report.recall_cat) {
    j["recall_category"] = recall_map(*report.recall_cat);
    j["recall_category_record_weighted"] = recall_map(*report.recall_cat_record);
  }
  if (report.joint) {
    j["joint_matrix"] = {{"both", report.joint->both},
                         {"category_only", report.joint->cat_only},
                         {"location_only", report.joint->loc_only},
                         {"neither", report.joint->neither}};
  }
  j["mean_pred_target_km"] = report.mean_pred_target_km;
  nlohmann::ordered_json users = nlohmann::ordered_json::object();
  for (const auto& [u, v] : report.per_user_recall1) users[std::to_string(u)] = v;
  j["per_user_recall@1"] = users;
  return j;
}

std::vector<SweepPoint> sensitivity_sweep(const preprocess::ProcessedDataset& ds, const model::ModelConfig& cfg,
                                          const trainer::TrainerOptions& base,
                                          std::span<const objective::LossWeights> grid,
                                          std::span<const std::uint64_t> seeds) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty lambda grid");
  if (seeds.empty()) throw std::invalid_argument("sweep: no seeds");
  const model::VocabSizes sizes{ds.vocab.num_users(), ds.vocab.num_locations(), ds.vocab.num_categories()};
  const auto test = trainer::make_instances(ds, trainer::Split::test);
  std::vector<SweepPoint> out;
  for (const auto& w : grid) {
    SweepPoint point;
    point.weights = w;
    for (std::uint64_t seed : seeds) {
      trainer::TrainerOptions options = base;
      options.weights = w;
      options.seed = seed;
      model::Model m(cfg, sizes, seed);
      trainer::fit(m, ds, options);
      const auto preds = predict(m, ds, test);
      point.recall1.push_back(location_recall(preds, 1, ds.users.size()).mean);
    }
    const double n = static_cast<double>(point.recall1.size());
    point.mean = std::accumulate(point.recall1.begin(), point.recall1.end(), 0.0) / n;
    if (point.recall1.size() > 1) {
      double ss = 0.0;
      for (double v : point.recall1) ss += (v - point.mean) * (v - point.mean);
      point.sd = std::sqrt(ss / (n - 1.0));
    }
    out.push_back(std::move(point));
  }
  return out;
}

}  // namespace cslsl::evaluate
