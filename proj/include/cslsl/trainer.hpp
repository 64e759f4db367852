#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cslsl/model.hpp"
#include "cslsl/objective.hpp"
#include "cslsl/preprocess.hpp"

namespace cslsl::trainer {

enum class Split { train, test };

// Target record `target` of session `session` of ds.users[user_slot]. The
// prefix is records [0, target) of that session and the history every
// earlier session of the user.
struct TrainingInstance {
  std::size_t user_slot = 0;
  std::size_t session = 0;
  std::size_t target = 0;
  friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

std::vector<TrainingInstance> make_instances(const preprocess::ProcessedDataset& ds, Split split);

model::Example make_example(const preprocess::ProcessedDataset& ds, const TrainingInstance& inst);
model::Batch make_batch(const preprocess::ProcessedDataset& ds, std::span<const TrainingInstance> instances);

struct TrainerOptions {
  std::size_t batch_size = 32;
  int epochs = 50;
  int patience = 10;
  double clip_norm = 5.0;  // <= 0 disables clipping
  grad::AdamOptions adam;
  objective::LossWeights weights;
  std::uint64_t seed = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochResult {
  objective::LossBreakdown losses;  // mean over batches
  std::size_t steps = 0;
};

// One pass over `instances` in an order drawn from (seed, epoch).
// Throws TrainingError on a non-finite loss.
EpochResult train_epoch(model::Model& m, const preprocess::ProcessedDataset& ds,
                        std::span<const TrainingInstance> instances, const TrainerOptions& options, int epoch);

struct EpochRecord {
  int epoch = 0;
  objective::LossBreakdown losses;
  double recall1 = 0.0;
  double recall5 = 0.0;
  double recall10 = 0.0;
};

struct FitOptions {
  // Checkpoints (best.ckpt, last.ckpt) and epochs.csv go here when set.
  std::filesystem::path out_dir;
  std::string config_hash;
  // Continue from out_dir/last.ckpt if present.
  bool resume = false;
  std::ostream* progress = nullptr;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_recall = -1.0;
  bool stopped_early = false;
};

inline constexpr const char* kBestCheckpoint = "best.ckpt";
inline constexpr const char* kLastCheckpoint = "last.ckpt";
inline constexpr const char* kEpochLog = "epochs.csv";

// Trains up to options.epochs, scoring location Recall@1 on the test split
// after each epoch. Stops once `patience` consecutive epochs fail to improve
// on the best (at least one such epoch). On return the model holds the best
// epoch's parameters.
FitResult fit(model::Model& m, const preprocess::ProcessedDataset& ds, const TrainerOptions& options,
              const FitOptions& fit_options = {});

}  // namespace cslsl::trainer
