#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cslsl/ingest.hpp"
#include "cslsl/model.hpp"
#include "cslsl/objective.hpp"
#include "cslsl/preprocess.hpp"
#include "cslsl/trainer.hpp"

namespace cslsl::config {

// Carries every problem found, one per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

// Configuration file: one `key = value` per line, `#` starts a comment.
//
//   data.path                 raw check-in file (required for prepare)
//   data.format               foursquare | gowalla
//   data.tz_offset_minutes    fixed UTC offset for gowalla records
//   prep.min_count            sparse user/location threshold (10)
//   prep.min_session_records  (2)
//   prep.min_sessions         (5)
//   prep.train_ratio          (0.8)
//   prep.joint_fixpoint       true | false (true)
//   model.variant             LSL SBLSL SLSL HLSL CLSL CLSL_CTL CSLSL CSLSL_T CSLSL_C
//   model.dim_location .. model.dim_user, model.hidden
//   loss.lambda_t, loss.lambda_c, loss.lambda_s
//   train.batch_size, train.epochs, train.patience, train.lr, train.clip_norm
//   seed
//   output_dir                artifacts root (required)
struct RunConfig {
  std::filesystem::path data_path;
  ingest::SourceTag format = ingest::SourceTag::foursquare;
  int tz_offset_minutes = 0;
  preprocess::PipelineOptions prep;
  model::ModelConfig model;
  objective::LossWeights weights;
  trainer::TrainerOptions train;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  std::filesystem::path dataset_dir() const { return output_dir / "data"; }
  std::filesystem::path run_dir() const;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);

// Applies every known key; throws ConfigError listing all unknown keys and
// invalid values.
RunConfig from_key_values(const KeyValues& kv, const std::filesystem::path& base_dir = {});
RunConfig load(const std::filesystem::path& path, const KeyValues& overrides = {});

// Canonical `key=value` lines of every setting.
std::string canonical(const RunConfig& cfg);
// FNV-1a 64 of the canonical form minus data.path, seed and output_dir, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace cslsl::config
