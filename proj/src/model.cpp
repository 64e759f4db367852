#include "cslsl/model.hpp"

#include <algorithm>
#include <array>

namespace cslsl::model {

using grad::Tape;
using grad::Tensor2;
using grad::Var;

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 9> kVariantNames = {{
    {Variant::LSL, "LSL"},
    {Variant::SBLSL, "SBLSL"},
    {Variant::SLSL, "SLSL"},
    {Variant::HLSL, "HLSL"},
    {Variant::CLSL, "CLSL"},
    {Variant::CLSL_CTL, "CLSL_CTL"},
    {Variant::CSLSL, "CSLSL"},
    {Variant::CSLSL_T, "CSLSL_T"},
    {Variant::CSLSL_C, "CSLSL_C"},
}};

constexpr int kHours = 24;
constexpr int kDays = 7;

}  // namespace

std::string_view to_string(Variant v) {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) {
      return name;
    }
  }
  return "?";
}

Variant variant_from_string(std::string_view s) {
  for (const auto& [variant, name] : kVariantNames) {
    if (name == s) {
      return variant;
    }
  }
  throw ModelConfigError("unknown model variant '" + std::string(s) + "'");
}

bool has_time_head(Variant v) { return v != Variant::LSL && v != Variant::CSLSL_T; }

bool has_category_head(Variant v) { return v != Variant::LSL && v != Variant::CSLSL_C; }

bool uses_spatial_loss(Variant v) {
  return v == Variant::CSLSL || v == Variant::CSLSL_T || v == Variant::CSLSL_C;
}

bool is_causal(Variant v) {
  return v == Variant::CLSL || v == Variant::CLSL_CTL || v == Variant::CSLSL || v == Variant::CSLSL_T ||
         v == Variant::CSLSL_C;
}

void validate(const ModelConfig& cfg, const VocabSizes& sizes) {
  std::vector<std::string> problems;
  const std::array<std::pair<const char*, int>, 6> dims = {{{"dim_location", cfg.dim_location},
                                                            {"dim_category", cfg.dim_category},
                                                            {"dim_hour", cfg.dim_hour},
                                                            {"dim_day", cfg.dim_day},
                                                            {"dim_user", cfg.dim_user},
                                                            {"hidden", cfg.hidden}}};
  for (const auto& [name, value] : dims) {
    if (value <= 0) {
      problems.push_back(std::string(name) + " must be positive");
    }
  }
  if (sizes.users <= 0 || sizes.locations <= 0 || sizes.categories <= 0) {
    problems.emplace_back("vocabulary sizes must be positive");
  }
  if (has_category_head(cfg.variant) && !cfg.has_categories) {
    problems.push_back("variant " + std::string(to_string(cfg.variant)) +
                       " predicts categories but the dataset has none");
  }
  if (!cfg.has_categories && sizes.categories != 1) {
    problems.emplace_back("category-less data must use a single shared category");
  }
  if (!problems.empty()) {
    std::string msg = "invalid model configuration:";
    for (const auto& p : problems) {
      msg += " " + p + ";";
    }
    throw ModelConfigError(msg);
  }
}

Batch make_batch(std::span<const Example> examples) {
  Batch batch;
  const std::size_t B = examples.size();
  std::vector<std::vector<const preprocess::SessionRecord*>> history(B);
  std::size_t max_long = 0;
  std::size_t max_short = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const Example& ex = examples[b];
    if (ex.prefix.empty()) {
      throw std::invalid_argument("example has an empty prefix; prediction is undefined");
    }
    for (const auto& s : ex.history) {
      for (const auto& r : s) {
        history[b].push_back(&r);
      }
    }
    max_long = std::max(max_long, history[b].size());
    max_short = std::max(max_short, ex.prefix.size());
    batch.user.push_back(ex.user);
  }
  auto fill = [B](std::vector<StepBatch>& steps, std::size_t count, auto&& record_at) {
    steps.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      StepBatch& st = steps[k];
      st.loc.assign(B, 0);
      st.cat.assign(B, 0);
      st.hour.assign(B, 0);
      st.day.assign(B, 0);
      st.mask.assign(B, 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        if (const preprocess::SessionRecord* r = record_at(b, k)) {
          st.loc[b] = r->loc;
          st.cat[b] = r->cat;
          st.hour[b] = r->hour;
          st.day[b] = r->day;
          st.mask[b] = 1.0;
        }
      }
    }
  };
  fill(batch.long_steps, max_long, [&](std::size_t b, std::size_t k) -> const preprocess::SessionRecord* {
    return k < history[b].size() ? history[b][k] : nullptr;
  });
  fill(batch.short_steps, max_short, [&](std::size_t b, std::size_t k) -> const preprocess::SessionRecord* {
    return k < examples[b].prefix.size() ? &examples[b].prefix[k] : nullptr;
  });
  const bool with_targets = std::all_of(examples.begin(), examples.end(), [](const Example& e) { return e.target; });
  for (const Example& ex : examples) {
    batch.current_loc.push_back(ex.prefix.back().loc);
    if (with_targets) {
      batch.target_time.push_back(ex.target->time_of_week);
      batch.target_cat.push_back(ex.target->cat);
      batch.target_loc.push_back(ex.target->loc);
    }
  }
  return batch;
}

Model::Model(const ModelConfig& cfg, const VocabSizes& sizes, std::uint64_t seed) : cfg_(cfg), sizes_(sizes) {
  validate(cfg, sizes);
  std::mt19937_64 rng(seed);
  auto table = [&](const char* name, int rows, int cols) {
    return params_.add(name, grad::uniform_init(rows, cols, cols, rng));
  };
  emb_loc_ = table("emb.location", sizes.locations, cfg.dim_location);
  emb_cat_ = table("emb.category", sizes.categories, cfg.dim_category);
  emb_hour_ = table("emb.hour", kHours, cfg.dim_hour);
  emb_day_ = table("emb.day", kDays, cfg.dim_day);
  emb_user_ = table("emb.user", sizes.users, cfg.dim_user);

  const int E = cfg.embedding_dim();
  const int H = cfg.hidden;
  const int T = cfg.time_dim();
  const int C = sizes.categories;
  const int L = sizes.locations;
  switch (cfg.variant) {
    case Variant::CSLSL:
    case Variant::CLSL:
      lsc_time_ = add_lsc("time", E, rng);
      lsc_cat_ = add_lsc("category", E, rng);
      lsc_loc_ = add_lsc("location", E, rng);
      pred_time_ = add_head("time.pred", 1, H, rng);
      conv_time_ = add_head("time.conv", T, 1, rng);
      pred_cat_ = add_head("category.pred", C, H + T, rng);
      conv_cat_ = add_head("category.conv", cfg.dim_category, C, rng);
      pred_loc_ = add_head("location.pred", L, H + cfg.dim_category, rng);
      break;
    case Variant::CLSL_CTL:
      lsc_cat_ = add_lsc("category", E, rng);
      lsc_time_ = add_lsc("time", E, rng);
      lsc_loc_ = add_lsc("location", E, rng);
      pred_cat_ = add_head("category.pred", C, H, rng);
      conv_cat_ = add_head("category.conv", cfg.dim_category, C, rng);
      pred_time_ = add_head("time.pred", 1, H + cfg.dim_category, rng);
      conv_time_ = add_head("time.conv", T, 1, rng);
      pred_loc_ = add_head("location.pred", L, H + T, rng);
      break;
    case Variant::CSLSL_T:
      lsc_cat_ = add_lsc("category", E, rng);
      lsc_loc_ = add_lsc("location", E, rng);
      pred_cat_ = add_head("category.pred", C, H, rng);
      conv_cat_ = add_head("category.conv", cfg.dim_category, C, rng);
      pred_loc_ = add_head("location.pred", L, H + cfg.dim_category, rng);
      break;
    case Variant::CSLSL_C:
      lsc_time_ = add_lsc("time", E, rng);
      lsc_loc_ = add_lsc("location", E, rng);
      pred_time_ = add_head("time.pred", 1, H, rng);
      conv_time_ = add_head("time.conv", T, 1, rng);
      pred_loc_ = add_head("location.pred", L, H + T, rng);
      break;
    case Variant::LSL:
      lsc_loc_ = add_lsc("location", E, rng);
      pred_loc_ = add_head("location.pred", L, H, rng);
      break;
    case Variant::SBLSL:
      lsc_shared_ = add_lsc("shared", E, rng);
      pred_time_ = add_head("time.pred", 1, H, rng);
      pred_cat_ = add_head("category.pred", C, H, rng);
      pred_loc_ = add_head("location.pred", L, H, rng);
      break;
    case Variant::SLSL:
      lsc_time_ = add_lsc("time", E, rng);
      lsc_cat_ = add_lsc("category", E, rng);
      lsc_loc_ = add_lsc("location", E, rng);
      pred_time_ = add_head("time.pred", 1, H, rng);
      pred_cat_ = add_head("category.pred", C, H, rng);
      pred_loc_ = add_head("location.pred", L, H, rng);
      break;
    case Variant::HLSL:
      lsc_time_ = add_lsc("time", E, rng);
      lsc_cat_ = add_lsc("category", E + H, rng);
      lsc_loc_ = add_lsc("location", E + H, rng);
      pred_time_ = add_head("time.pred", 1, H, rng);
      pred_cat_ = add_head("category.pred", C, H, rng);
      pred_loc_ = add_head("location.pred", L, H, rng);
      break;
  }
}

LscParams Model::add_lsc(const std::string& branch, int input_dim, std::mt19937_64& rng) {
  const int H = cfg_.hidden;
  auto gru = [&](const std::string& prefix, grad::ParamId& w, grad::ParamId& u, grad::ParamId& b) {
    w = params_.add(prefix + ".W", grad::uniform_init(3 * H, input_dim, H, rng));
    u = params_.add(prefix + ".U", grad::uniform_init(3 * H, H, H, rng));
    b = params_.add(prefix + ".b", grad::uniform_init(1, 3 * H, H, rng));
  };
  LscParams p;
  gru(branch + ".long", p.long_w, p.long_u, p.long_b);
  gru(branch + ".short", p.short_w, p.short_u, p.short_b);
  return p;
}

HeadParams Model::add_head(const std::string& name, int out, int in, std::mt19937_64& rng) {
  HeadParams h;
  h.w = params_.add(name + ".W", grad::uniform_init(out, in, in, rng));
  h.b = params_.add(name + ".b", grad::uniform_init(1, out, in, rng));
  return h;
}

Var Model::head(Tape& tape, const HeadParams& h, Var x) const {
  return tape.affine(x, tape.param(h.w), tape.param(h.b));
}

std::optional<LscParams> Model::lsc_params(std::string_view branch) const {
  if (branch == "time") return lsc_time_;
  if (branch == "category") return lsc_cat_;
  if (branch == "location") return lsc_loc_;
  if (branch == "shared") return lsc_shared_;
  return std::nullopt;
}

Var Model::embed_records(Tape& tape, const StepBatch& step, std::span<const int> users) const {
  const std::array<Var, 5> parts = {
      tape.lookup(tape.param(emb_loc_), step.loc),   tape.lookup(tape.param(emb_cat_), step.cat),
      tape.lookup(tape.param(emb_hour_), step.hour), tape.lookup(tape.param(emb_day_), step.day),
      tape.lookup(tape.param(emb_user_), users),
  };
  return tape.concat(parts);
}

LscOutput Model::lsc_forward(Tape& tape, const LscParams& lsc, std::span<const Var> long_inputs,
                             std::span<const StepBatch> long_steps, std::span<const Var> short_inputs,
                             std::span<const StepBatch> short_steps, Var h0) const {
  if (short_inputs.empty()) {
    throw std::invalid_argument("lsc_forward: empty short-term prefix");
  }
  if (long_inputs.size() != long_steps.size() || short_inputs.size() != short_steps.size()) {
    throw std::invalid_argument("lsc_forward: inputs and step masks disagree");
  }
  LscOutput out;
  Var h = h0;
  if (!long_inputs.empty()) {
    const grad::GruVars w = tape.gru_params(lsc.long_w, lsc.long_u, lsc.long_b);
    for (std::size_t k = 0; k < long_inputs.size(); ++k) {
      h = tape.gru_step(long_inputs[k], h, w, long_steps[k].mask);
      out.long_states.push_back(h);
    }
  }
  const grad::GruVars w = tape.gru_params(lsc.short_w, lsc.short_u, lsc.short_b);
  for (std::size_t k = 0; k < short_inputs.size(); ++k) {
    h = tape.gru_step(short_inputs[k], h, w, short_steps[k].mask);
    out.short_states.push_back(h);
  }
  out.hidden = h;
  return out;
}

Outputs Model::forward(Tape& tape, const Batch& batch) const {
  return is_causal(cfg_.variant) ? causal_forward(tape, batch) : variant_forward(tape, batch);
}

namespace {

struct Embedded {
  std::vector<Var> long_inputs;
  std::vector<Var> short_inputs;
};

}  // namespace

Outputs Model::causal_forward(Tape& tape, const Batch& batch) const {
  if (!is_causal(cfg_.variant)) {
    throw std::invalid_argument("causal_forward: variant " + std::string(to_string(cfg_.variant)) +
                                " has no causal structure");
  }
  Embedded e;
  for (const auto& st : batch.long_steps) e.long_inputs.push_back(embed_records(tape, st, batch.user));
  for (const auto& st : batch.short_steps) e.short_inputs.push_back(embed_records(tape, st, batch.user));
  const Var zero = tape.constant(Tensor2::Zero(static_cast<Eigen::Index>(batch.size()), cfg_.hidden));
  auto lsc = [&](const LscParams& p, Var h0) {
    return lsc_forward(tape, p, e.long_inputs, batch.long_steps, e.short_inputs, batch.short_steps, h0).hidden;
  };

  Outputs o;
  switch (cfg_.variant) {
    case Variant::CSLSL:
    case Variant::CLSL:
      o.h_time = lsc(*lsc_time_, zero);
      o.t_hat = head(tape, *pred_time_, o.h_time);
      o.h_cat = lsc(*lsc_cat_, o.h_time);
      o.cat_logits = head(tape, *pred_cat_, tape.concat({o.h_cat, head(tape, *conv_time_, o.t_hat)}));
      o.h_loc = lsc(*lsc_loc_, o.h_cat);
      o.loc_logits = head(tape, *pred_loc_, tape.concat({o.h_loc, head(tape, *conv_cat_, o.cat_logits)}));
      break;
    case Variant::CLSL_CTL:
      o.h_cat = lsc(*lsc_cat_, zero);
      o.cat_logits = head(tape, *pred_cat_, o.h_cat);
      o.h_time = lsc(*lsc_time_, o.h_cat);
      o.t_hat = head(tape, *pred_time_, tape.concat({o.h_time, head(tape, *conv_cat_, o.cat_logits)}));
      o.h_loc = lsc(*lsc_loc_, o.h_time);
      o.loc_logits = head(tape, *pred_loc_, tape.concat({o.h_loc, head(tape, *conv_time_, o.t_hat)}));
      break;
    case Variant::CSLSL_T:
      o.h_cat = lsc(*lsc_cat_, zero);
      o.cat_logits = head(tape, *pred_cat_, o.h_cat);
      o.h_loc = lsc(*lsc_loc_, o.h_cat);
      o.loc_logits = head(tape, *pred_loc_, tape.concat({o.h_loc, head(tape, *conv_cat_, o.cat_logits)}));
      break;
    case Variant::CSLSL_C:
      o.h_time = lsc(*lsc_time_, zero);
      o.t_hat = head(tape, *pred_time_, o.h_time);
      o.h_loc = lsc(*lsc_loc_, o.h_time);
      o.loc_logits = head(tape, *pred_loc_, tape.concat({o.h_loc, head(tape, *conv_time_, o.t_hat)}));
      break;
    default:
      break;
  }
  return o;
}

Outputs Model::variant_forward(Tape& tape, const Batch& batch) const {
  if (is_causal(cfg_.variant)) {
    throw std::invalid_argument("variant_forward: variant " + std::string(to_string(cfg_.variant)) +
                                " uses the causal structure");
  }
  Embedded e;
  for (const auto& st : batch.long_steps) e.long_inputs.push_back(embed_records(tape, st, batch.user));
  for (const auto& st : batch.short_steps) e.short_inputs.push_back(embed_records(tape, st, batch.user));
  const Var zero = tape.constant(Tensor2::Zero(static_cast<Eigen::Index>(batch.size()), cfg_.hidden));
  auto lsc = [&](const LscParams& p, std::span<const Var> long_in, std::span<const Var> short_in) {
    return lsc_forward(tape, p, long_in, batch.long_steps, short_in, batch.short_steps, zero);
  };

  Outputs o;
  switch (cfg_.variant) {
    case Variant::LSL:
      o.h_loc = lsc(*lsc_loc_, e.long_inputs, e.short_inputs).hidden;
      o.loc_logits = head(tape, *pred_loc_, o.h_loc);
      break;
    case Variant::SBLSL: {
      const Var h = lsc(*lsc_shared_, e.long_inputs, e.short_inputs).hidden;
      o.h_time = o.h_cat = o.h_loc = h;
      o.t_hat = head(tape, *pred_time_, h);
      o.cat_logits = head(tape, *pred_cat_, h);
      o.loc_logits = head(tape, *pred_loc_, h);
      break;
    }
    case Variant::SLSL:
      o.h_time = lsc(*lsc_time_, e.long_inputs, e.short_inputs).hidden;
      o.h_cat = lsc(*lsc_cat_, e.long_inputs, e.short_inputs).hidden;
      o.h_loc = lsc(*lsc_loc_, e.long_inputs, e.short_inputs).hidden;
      o.t_hat = head(tape, *pred_time_, o.h_time);
      o.cat_logits = head(tape, *pred_cat_, o.h_cat);
      o.loc_logits = head(tape, *pred_loc_, o.h_loc);
      break;
    case Variant::HLSL: {
      // Each downstream GRU step consumes e_r (+) the upstream hidden state of the same step.
      auto stack = [&](std::span<const Var> inputs, const std::vector<Var>& upstream) {
        std::vector<Var> out;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          out.push_back(tape.concat({inputs[k], upstream[k]}));
        }
        return out;
      };
      const LscOutput t = lsc(*lsc_time_, e.long_inputs, e.short_inputs);
      const LscOutput c =
          lsc(*lsc_cat_, stack(e.long_inputs, t.long_states), stack(e.short_inputs, t.short_states));
      const LscOutput l =
          lsc(*lsc_loc_, stack(e.long_inputs, c.long_states), stack(e.short_inputs, c.short_states));
      o.h_time = t.hidden;
      o.h_cat = c.hidden;
      o.h_loc = l.hidden;
      o.t_hat = head(tape, *pred_time_, o.h_time);
      o.cat_logits = head(tape, *pred_cat_, o.h_cat);
      o.loc_logits = head(tape, *pred_loc_, o.h_loc);
      break;
    }
    default:
      break;
  }
  return o;
}

BranchState Model::run(const Batch& batch) const {
  Tape tape(&params_);
  const Outputs o = forward(tape, batch);
  BranchState s;
  auto take = [&](Var v, Tensor2& dst) {
    if (v.valid()) {
      dst = tape.value(v);
    }
  };
  take(o.h_time, s.h_time);
  take(o.h_cat, s.h_cat);
  take(o.h_loc, s.h_loc);
  take(o.t_hat, s.t_hat);
  take(o.cat_logits, s.cat_logits);
  take(o.loc_logits, s.loc_logits);
  return s;
}

}  // namespace cslsl::model
