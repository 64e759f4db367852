#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cslsl/grad.hpp"
#include "cslsl/preprocess.hpp"

namespace cslsl::model {

class ModelConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Variant { LSL, SBLSL, SLSL, HLSL, CLSL, CLSL_CTL, CSLSL, CSLSL_T, CSLSL_C };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

bool has_time_head(Variant v);
bool has_category_head(Variant v);
bool uses_spatial_loss(Variant v);
bool is_causal(Variant v);

struct ModelConfig {
  int dim_location = 200;
  int dim_category = 100;
  int dim_hour = 10;
  int dim_day = 20;
  int dim_user = 20;
  int hidden = 600;
  Variant variant = Variant::CSLSL;
  bool has_categories = true;

  int time_dim() const { return dim_hour + dim_day; }
  int embedding_dim() const { return dim_location + dim_category + time_dim() + dim_user; }
};

struct VocabSizes {
  int users = 0;
  int locations = 0;
  int categories = 1;  // 1 for category-less data: the shared "no category" row
};

// Throws ModelConfigError naming every violated constraint.
void validate(const ModelConfig& cfg, const VocabSizes& sizes);

// Model inputs for one time step across a batch. Padded entries have mask 0.
struct StepBatch {
  std::vector<int> loc;
  std::vector<int> cat;
  std::vector<int> hour;
  std::vector<int> day;
  std::vector<double> mask;
};

struct Batch {
  std::vector<int> user;
  std::vector<StepBatch> long_steps;   // history, all prior sessions in order
  std::vector<StepBatch> short_steps;  // prefix of the current session
  // Targets; empty when the batch is built without them.
  std::vector<double> target_time;
  std::vector<int> target_cat;
  std::vector<int> target_loc;
  std::vector<int> current_loc;  // last prefix record

  std::size_t size() const { return user.size(); }
};

// One prediction problem, referencing records owned elsewhere.
struct Example {
  int user = 0;
  std::vector<std::span<const preprocess::SessionRecord>> history;
  std::span<const preprocess::SessionRecord> prefix;
  const preprocess::SessionRecord* target = nullptr;
};

// Pads histories and prefixes to the batch maximum. Throws on an empty prefix.
Batch make_batch(std::span<const Example> examples);

struct LscParams {
  grad::ParamId long_w, long_u, long_b;
  grad::ParamId short_w, short_u, short_b;
};

struct LscOutput {
  grad::Var hidden;                  // final short-term hidden state
  std::vector<grad::Var> long_states;   // per long step
  std::vector<grad::Var> short_states;  // per short step
};

struct HeadParams {
  grad::ParamId w, b;
};

// Graph handles of one forward pass. Heads absent from the variant are invalid.
struct Outputs {
  grad::Var h_time, h_cat, h_loc;
  grad::Var t_hat;       // B x 1
  grad::Var cat_logits;  // B x |C|
  grad::Var loc_logits;  // B x |L|
};

// Forward results in value form.
struct BranchState {
  grad::Tensor2 h_time, h_cat, h_loc;
  grad::Tensor2 t_hat;
  grad::Tensor2 cat_logits;
  grad::Tensor2 loc_logits;
};

class Model {
 public:
  Model(const ModelConfig& cfg, const VocabSizes& sizes, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const VocabSizes& sizes() const { return sizes_; }
  grad::ParamStore& params() { return params_; }
  const grad::ParamStore& params() const { return params_; }

  // e_r = e_l (+) e_c (+) e_hour (+) e_day (+) e_user for one step of the batch.
  grad::Var embed_records(grad::Tape& tape, const StepBatch& step, std::span<const int> users) const;

  // Long-term GRU over `long_inputs` from h0, then short-term GRU over
  // `short_inputs` from the long-term result.
  LscOutput lsc_forward(grad::Tape& tape, const LscParams& lsc, std::span<const grad::Var> long_inputs,
                        std::span<const StepBatch> long_steps, std::span<const grad::Var> short_inputs,
                        std::span<const StepBatch> short_steps, grad::Var h0) const;

  // Dispatches on the configured variant.
  Outputs forward(grad::Tape& tape, const Batch& batch) const;
  Outputs causal_forward(grad::Tape& tape, const Batch& batch) const;
  Outputs variant_forward(grad::Tape& tape, const Batch& batch) const;

  BranchState run(const Batch& batch) const;

  std::optional<LscParams> lsc_params(std::string_view branch) const;

 private:
  LscParams add_lsc(const std::string& branch, int input_dim, std::mt19937_64& rng);
  HeadParams add_head(const std::string& name, int out, int in, std::mt19937_64& rng);
  grad::Var head(grad::Tape& tape, const HeadParams& h, grad::Var x) const;

  ModelConfig cfg_;
  VocabSizes sizes_;
  mutable grad::ParamStore params_;
  grad::ParamId emb_loc_, emb_cat_, emb_hour_, emb_day_, emb_user_;
  std::optional<LscParams> lsc_time_, lsc_cat_, lsc_loc_, lsc_shared_;
  std::optional<HeadParams> pred_time_, pred_cat_, pred_loc_, conv_time_, conv_cat_;
};

}  // namespace cslsl::model
