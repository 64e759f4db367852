#include "cslsl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cslsl/evaluate.hpp"

namespace cslsl::trainer {

namespace fs = std::filesystem;
using preprocess::ProcessedDataset;

std::vector<TrainingInstance> make_instances(const ProcessedDataset& ds, Split split) {
  std::vector<TrainingInstance> out;
  for (std::size_t u = 0; u < ds.users.size(); ++u) {
    const auto& user = ds.users[u];
    const std::size_t lo = split == Split::train ? 0 : user.split_point;
    const std::size_t hi = split == Split::train ? user.split_point : user.sessions.size();
    for (std::size_t p = lo; p < hi; ++p) {
      for (std::size_t i = 1; i < user.sessions[p].records.size(); ++i) {
        out.push_back({u, p, i});
      }
    }
  }
  return out;
}

model::Example make_example(const ProcessedDataset& ds, const TrainingInstance& inst) {
  const auto& user = ds.users.at(inst.user_slot);
  const auto& records = user.sessions.at(inst.session).records;
  if (inst.target == 0 || inst.target >= records.size()) {
    throw std::out_of_range("training instance target outside its session");
  }
  model::Example ex;
  ex.user = user.user_index;
  for (std::size_t p = 0; p < inst.session; ++p) {
    ex.history.emplace_back(user.sessions[p].records);
  }
  ex.prefix = std::span(records).first(inst.target);
  ex.target = &records[inst.target];
  return ex;
}

model::Batch make_batch(const ProcessedDataset& ds, std::span<const TrainingInstance> instances) {
  std::vector<model::Example> examples;
  examples.reserve(instances.size());
  for (const auto& inst : instances) {
    examples.push_back(make_example(ds, inst));
  }
  return model::make_batch(examples);
}

namespace {

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  return std::mt19937_64(seq);
}

bool finite(const objective::LossBreakdown& l) {
  return std::isfinite(l.l_l) && std::isfinite(l.l_t) && std::isfinite(l.l_c) && std::isfinite(l.l_s) &&
         std::isfinite(l.total);
}

[[noreturn]] void abort_non_finite(const model::Model& m, std::span<const TrainingInstance> batch,
                                   const objective::LossBreakdown& l, int epoch) {
  std::ostringstream msg;
  msg << "non-finite loss in epoch " << epoch << " (L_l=" << l.l_l << " L_t=" << l.l_t << " L_c=" << l.l_c
      << " L_s=" << l.l_s << "); batch instances (user, session, target):";
  for (const auto& inst : batch) {
    msg << " (" << inst.user_slot << "," << inst.session << "," << inst.target << ")";
  }
  msg << "; parameter norms:";
  for (const auto& p : m.params()) {
    msg << " " << p.name << "=" << p.value.norm();
  }
  throw TrainingError(msg.str());
}

void accumulate(objective::LossBreakdown& acc, const objective::LossBreakdown& l) {
  acc.l_l += l.l_l;
  acc.l_t += l.l_t;
  acc.l_c += l.l_c;
  acc.l_s += l.l_s;
  acc.total += l.total;
}

}  // namespace

EpochResult train_epoch(model::Model& m, const ProcessedDataset& ds, std::span<const TrainingInstance> instances,
                        const TrainerOptions& options, int epoch) {
  if (instances.empty()) {
    throw TrainingError("no training instances");
  }
  if (options.batch_size == 0) {
    throw std::invalid_argument("batch_size must be positive");
  }
  std::vector<TrainingInstance> order(instances.begin(), instances.end());
  auto rng = epoch_rng(options.seed, epoch);
  std::shuffle(order.begin(), order.end(), rng);

  const auto& coords = ds.vocab.location_coords;
  EpochResult result;
  auto& params = m.params();
  for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
    const auto chunk = std::span(order).subspan(start, std::min(options.batch_size, order.size() - start));
    const model::Batch batch = make_batch(ds, chunk);
    grad::Tape tape(&params);
    const model::Outputs out = m.forward(tape, batch);
    const objective::LossGraph loss = objective::build_loss(tape, out, batch, options.weights, m.config().variant, coords);
    if (!finite(loss.values)) {
      abort_non_finite(m, chunk, loss.values, epoch);
    }
    params.zero_grad();
    tape.backward(loss.total);
    if (options.clip_norm > 0.0) {
      params.clip_grad_norm(options.clip_norm);
    }
    params.adam_step(options.adam);
    accumulate(result.losses, loss.values);
    ++result.steps;
  }
  const double inv = 1.0 / static_cast<double>(result.steps);
  result.losses.l_l *= inv;
  result.losses.l_t *= inv;
  result.losses.l_c *= inv;
  result.losses.l_s *= inv;
  result.losses.total *= inv;
  return result;
}

namespace {

constexpr const char* kLogColumns = "epoch,L_l,L_t,L_c,L_s,L_total,recall@1,recall@5,recall@10";

std::string format_real(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void write_log(const fs::path& path, const std::string& config_hash, std::uint64_t seed,
               const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  out << "# cslsl epoch-log v1\n# config_hash=" << config_hash << "\n# seed=" << seed << "\n" << kLogColumns << "\n";
  for (const auto& r : history) {
    out << r.epoch << "," << format_real(r.losses.l_l) << "," << format_real(r.losses.l_t) << ","
        << format_real(r.losses.l_c) << "," << format_real(r.losses.l_s) << "," << format_real(r.losses.total) << ","
        << format_real(r.recall1) << "," << format_real(r.recall5) << "," << format_real(r.recall10) << "\n";
  }
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

std::vector<EpochRecord> read_log(const fs::path& path, int max_epoch) {
  std::vector<EpochRecord> history;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.starts_with("epoch")) {
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream s(line);
    EpochRecord r;
    s >> r.epoch >> r.losses.l_l >> r.losses.l_t >> r.losses.l_c >> r.losses.l_s >> r.losses.total >> r.recall1 >>
        r.recall5 >> r.recall10;
    if (s && r.epoch <= max_epoch) {
      history.push_back(r);
    }
  }
  return history;
}

std::vector<grad::Tensor2> snapshot(const grad::ParamStore& store) {
  std::vector<grad::Tensor2> values;
  for (const auto& p : store) {
    values.push_back(p.value);
  }
  return values;
}

void restore(grad::ParamStore& store, const std::vector<grad::Tensor2>& values) {
  std::size_t k = 0;
  for (auto& p : store) {
    p.value = values[k++];
  }
}

grad::CheckpointData checkpoint_data(const TrainerOptions& options, const FitOptions& fo, int epoch,
                                     const FitResult& result, int stale) {
  grad::CheckpointData data;
  data.rng_seed = options.seed;
  data.meta["config_hash"] = fo.config_hash;
  data.meta["epoch"] = std::to_string(epoch);
  data.meta["best_epoch"] = std::to_string(result.best_epoch);
  data.meta["best_recall"] = format_real(result.best_recall);
  data.meta["stale"] = std::to_string(stale);
  return data;
}

}  // namespace

FitResult fit(model::Model& m, const ProcessedDataset& ds, const TrainerOptions& options, const FitOptions& fo) {
  objective::validate(options.weights);
  const auto train = make_instances(ds, Split::train);
  const auto test = make_instances(ds, Split::test);
  if (train.empty()) {
    throw TrainingError("no training instances");
  }
  const std::size_t num_users = ds.users.size();
  const bool persist = !fo.out_dir.empty();
  if (persist) {
    fs::create_directories(fo.out_dir);
  }

  FitResult result;
  int first_epoch = 1;
  int stale = 0;
  std::vector<grad::Tensor2> best_values = snapshot(m.params());
  if (persist && fo.resume && fs::exists(fo.out_dir / kLastCheckpoint)) {
    const auto data = grad::load_checkpoint(fo.out_dir / kLastCheckpoint, m.params());
    if (data.rng_seed != options.seed || data.meta.at("config_hash") != fo.config_hash) {
      throw TrainingError("checkpoint " + (fo.out_dir / kLastCheckpoint).string() +
                          " belongs to a different seed or configuration");
    }
    const int done = std::stoi(data.meta.at("epoch"));
    first_epoch = done + 1;
    result.best_epoch = std::stoi(data.meta.at("best_epoch"));
    result.best_recall = std::stod(data.meta.at("best_recall"));
    stale = std::stoi(data.meta.at("stale"));
    result.history = read_log(fo.out_dir / kEpochLog, done);
    if (fs::exists(fo.out_dir / kBestCheckpoint)) {
      model::Model best(m.config(), m.sizes(), options.seed);
      grad::load_checkpoint(fo.out_dir / kBestCheckpoint, best.params());
      best_values = snapshot(best.params());
    }
    if (stale >= std::max(options.patience, 1)) {
      result.stopped_early = true;
      first_epoch = options.epochs + 1;
    }
  }

  for (int epoch = first_epoch; epoch <= options.epochs; ++epoch) {
    const EpochResult er = train_epoch(m, ds, train, options, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.losses = er.losses;
    if (!test.empty()) {
      const auto preds = evaluate::predict(m, ds, test, std::max<std::size_t>(options.batch_size, 64));
      rec.recall1 = evaluate::location_recall(preds, 1, num_users).mean;
      rec.recall5 = evaluate::location_recall(preds, 5, num_users).mean;
      rec.recall10 = evaluate::location_recall(preds, 10, num_users).mean;
    }
    result.history.push_back(rec);
    if (fo.progress) {
      *fo.progress << "epoch " << epoch << " loss " << rec.losses.total << " recall@1 " << rec.recall1 << "\n";
    }

    if (rec.recall1 > result.best_recall) {
      result.best_recall = rec.recall1;
      result.best_epoch = epoch;
      best_values = snapshot(m.params());
      stale = 0;
      if (persist) {
        grad::save_checkpoint(fo.out_dir / kBestCheckpoint, m.params(),
                              checkpoint_data(options, fo, epoch, result, stale));
      }
    } else {
      ++stale;
    }
    if (persist) {
      grad::save_checkpoint(fo.out_dir / kLastCheckpoint, m.params(), checkpoint_data(options, fo, epoch, result, stale));
      write_log(fo.out_dir / kEpochLog, fo.config_hash, options.seed, result.history);
    }
    if (stale >= std::max(options.patience, 1)) {
      result.stopped_early = epoch < options.epochs;
      break;
    }
  }
  restore(m.params(), best_values);
  return result;
}

}  // namespace cslsl::trainer
