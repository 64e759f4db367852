// cslsl: prepare | train | evaluate | analyze | sweep
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cslsl/config.hpp"
#include "cslsl/dataset_io.hpp"
#include "cslsl/evaluate.hpp"
#include "cslsl/ingest.hpp"
#include "cslsl/preprocess.hpp"
#include "cslsl/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cslsl;

namespace {

// Error with the artifact or key it concerns.
struct CommandError : std::runtime_error {
  CommandError(std::string what, std::string subject = {})
      : std::runtime_error(std::move(what)), subject(std::move(subject)) {}
  std::string subject;
};

void fail_line(const std::string& command, const std::string& kind, const std::string& message,
               const json& extra = json::object()) {
  json j;
  j["status"] = "error";
  j["command"] = command;
  j["kind"] = kind;
  j["message"] = message;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  std::cerr << j.dump() << std::endl;
}

io::Header artifact_header(const config::RunConfig& cfg) {
  return {{"config_hash", config::config_hash(cfg)}, {"seed", std::to_string(cfg.seed)}};
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw CommandError("cannot write " + path.string(), path.string());
}

std::string csv_header(const config::RunConfig& cfg) {
  return "# config_hash=" + config::config_hash(cfg) + "\n# seed=" + std::to_string(cfg.seed) + "\n";
}

json counts_json(const preprocess::DatasetCounts& c) {
  return {{"users", c.users}, {"locations", c.locations}, {"records", c.records}, {"categories", c.categories}};
}

preprocess::ProcessedDataset load_prepared(const config::RunConfig& cfg) {
  const fs::path dir = cfg.dataset_dir();
  if (!fs::exists(dir / io::kProcessedFile) || !fs::exists(dir / io::kVocabFile)) {
    throw CommandError("prepared dataset missing: run prepare first", (dir / io::kProcessedFile).string());
  }
  return io::load_dataset(dir);
}

model::ModelConfig model_config(const config::RunConfig& cfg, const preprocess::ProcessedDataset& ds) {
  model::ModelConfig mc = cfg.model;
  mc.has_categories = ds.vocab.has_categories;
  return mc;
}

model::VocabSizes sizes_of(const preprocess::ProcessedDataset& ds) {
  return {ds.vocab.num_users(), ds.vocab.num_locations(), ds.vocab.num_categories()};
}

json cmd_prepare(const config::RunConfig& cfg) {
  if (cfg.data_path.empty()) throw CommandError("data.path is required for prepare", "data.path");
  if (!fs::exists(cfg.data_path)) throw CommandError("data.path does not exist", cfg.data_path.string());
  const ingest::RecordSet raw = cfg.format == ingest::SourceTag::foursquare
                                    ? ingest::parse_foursquare(cfg.data_path)
                                    : ingest::parse_gowalla(cfg.data_path, {cfg.tz_offset_minutes});
  preprocess::PipelineReport report;
  const auto ds = preprocess::run_pipeline(raw, cfg.prep, &report);
  io::Header header = artifact_header(cfg);
  header["source"] = std::string(ingest::to_string(cfg.format));
  io::save_dataset(cfg.dataset_dir(), ds, header);

  json stats;
  stats["config_hash"] = config::config_hash(cfg);
  stats["seed"] = cfg.seed;
  stats["source"] = ingest::to_string(cfg.format);
  stats["lines_read"] = raw.lines_read;
  stats["rejected_lines"] = raw.rejects.size();
  stats["raw"] = counts_json(report.raw);
  stats["filtered"] = counts_json(report.filtered);
  stats["merged"] = counts_json(report.merged);
  stats["processed"] = counts_json(report.processed);
  stats["clean_rounds"] = report.rounds;
  std::size_t sessions = 0, train_sessions = 0;
  for (const auto& u : ds.users) {
    sessions += u.sessions.size();
    train_sessions += u.split_point;
  }
  stats["sessions"] = sessions;
  stats["train_sessions"] = train_sessions;
  stats["train_instances"] = trainer::make_instances(ds, trainer::Split::train).size();
  stats["test_instances"] = trainer::make_instances(ds, trainer::Split::test).size();
  write_text(cfg.dataset_dir() / "stats.json", stats.dump(2) + "\n");
  return stats;
}

json cmd_train(const config::RunConfig& cfg, bool resume) {
  const auto ds = load_prepared(cfg);
  model::Model m(model_config(cfg, ds), sizes_of(ds), cfg.seed);
  trainer::FitOptions fo;
  fo.out_dir = cfg.run_dir();
  fo.config_hash = config::config_hash(cfg);
  fo.resume = resume;
  fo.progress = &std::cerr;
  const auto result = trainer::fit(m, ds, cfg.train, fo);
  json j;
  j["config_hash"] = fo.config_hash;
  j["seed"] = cfg.seed;
  j["variant"] = model::to_string(cfg.model.variant);
  j["epochs_run"] = result.history.empty() ? 0 : result.history.back().epoch;
  j["best_epoch"] = result.best_epoch;
  j["best_recall@1"] = result.best_recall;
  j["stopped_early"] = result.stopped_early;
  j["best_checkpoint"] = (fo.out_dir / trainer::kBestCheckpoint).string();
  j["epoch_log"] = (fo.out_dir / trainer::kEpochLog).string();
  return j;
}

// Loads the checkpoint after checking it belongs to this configuration.
model::Model load_model(const config::RunConfig& cfg, const preprocess::ProcessedDataset& ds,
                        const fs::path& checkpoint) {
  if (checkpoint.empty() || !fs::exists(checkpoint)) {
    throw CommandError("checkpoint not found: " + checkpoint.string(), checkpoint.string());
  }
  const auto meta = grad::read_checkpoint_meta(checkpoint);
  const std::string expected = config::config_hash(cfg);
  const auto it = meta.meta.find("config_hash");
  if (it == meta.meta.end() || it->second != expected) {
    throw CommandError("checkpoint config hash " + (it == meta.meta.end() ? std::string("<none>") : it->second) +
                           " does not match configuration hash " + expected,
                       checkpoint.string());
  }
  model::Model m(model_config(cfg, ds), sizes_of(ds), meta.rng_seed);
  grad::load_checkpoint(checkpoint, m.params());
  return m;
}

fs::path default_checkpoint(const config::RunConfig& cfg, const std::string& given) {
  return given.empty() ? cfg.run_dir() / trainer::kBestCheckpoint : fs::path(given);
}

json cmd_evaluate(const config::RunConfig& cfg, const fs::path& checkpoint) {
  const auto ds = load_prepared(cfg);
  const model::Model m = load_model(cfg, ds, checkpoint);
  const auto test = trainer::make_instances(ds, trainer::Split::test);
  const auto preds = evaluate::predict(m, ds, test);
  const auto report = evaluate::make_report(preds, ds, ds.vocab.location_coords);
  json j;
  j["config_hash"] = config::config_hash(cfg);
  j["seed"] = cfg.seed;
  j["variant"] = model::to_string(cfg.model.variant);
  const auto report_json = evaluate::to_json(report);
  for (const auto& [k, v] : report_json.items()) j[k] = v;
  write_text(cfg.run_dir() / "metrics.json", j.dump(2) + "\n");
  return j;
}

json cmd_analyze(const config::RunConfig& cfg, const fs::path& checkpoint) {
  const auto ds = load_prepared(cfg);
  const model::Model m = load_model(cfg, ds, checkpoint);
  const auto test = trainer::make_instances(ds, trainer::Split::test);
  const auto preds = evaluate::predict(m, ds, test);
  const auto& coords = ds.vocab.location_coords;
  const fs::path dir = cfg.run_dir() / "analysis";
  json files = json::array();
  auto emit = [&](const std::string& name, const std::string& body) {
    write_text(dir / name, csv_header(cfg) + body);
    files.push_back((dir / name).string());
  };

  if (ds.vocab.has_categories) {
    const auto jm = evaluate::joint_causal_analysis(preds);
    std::ostringstream s;
    s.precision(17);
    s << "category_correct,location_correct,fraction\n"
      << "1,1," << jm.both << "\n1,0," << jm.cat_only << "\n0,1," << jm.loc_only << "\n0,0," << jm.neither << "\n";
    emit("joint_matrix.csv", s.str());
  }
  {
    std::vector<double> edges;
    for (int i = 0; i <= 40; ++i) edges.push_back(0.5 * i);
    std::ostringstream s;
    evaluate::pred_target_distance_hist(preds, coords, edges).write_csv(s);
    emit("pred_target_distance.csv", s.str());
  }
  {
    const auto d = evaluate::displacement_comparison(preds, coords);
    std::ostringstream p, a;
    d.predicted.write_csv(p);
    d.actual.write_csv(a);
    emit("displacement_predicted.csv", p.str());
    emit("displacement_actual.csv", a.str());
  }
  {
    const auto grid = geo::bounding_grid(coords, 500.0);
    const auto table = evaluate::attractiveness_error(preds, coords, grid);
    std::ostringstream s, e;
    evaluate::write_csv(s, table);
    emit("attractiveness.csv", s.str());
    e << "abs_error,cells\n";
    for (const auto& [err, n] : table.error_counts) e << err << "," << n << "\n";
    emit("attractiveness_errors.csv", e.str());
  }
  json j;
  j["config_hash"] = config::config_hash(cfg);
  j["seed"] = cfg.seed;
  j["instances"] = preds.size();
  j["files"] = files;
  return j;
}

// "lambda_t=1,10;lambda_c=10;lambda_s=0,10" -> cartesian product; missing
// components keep the configured value.
std::vector<objective::LossWeights> parse_grid(const std::string& spec, const objective::LossWeights& base) {
  std::map<std::string, std::vector<double>> axes;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ';')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    const std::string key = part.substr(0, eq);
    if (eq == std::string::npos || (key != "lambda_t" && key != "lambda_c" && key != "lambda_s")) {
      throw CommandError("bad --lambda-grid component '" + part + "'", "lambda-grid");
    }
    std::stringstream vs(part.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ',')) {
      try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size() || !(x >= 0.0)) throw std::invalid_argument(v);
        axes[key].push_back(x);
      } catch (const std::exception&) {
        throw CommandError("bad --lambda-grid value '" + v + "'", "lambda-grid");
      }
    }
  }
  auto values = [&](const char* key, double fallback) {
    const auto it = axes.find(key);
    return it == axes.end() || it->second.empty() ? std::vector<double>{fallback} : it->second;
  };
  std::vector<objective::LossWeights> grid;
  for (double t : values("lambda_t", base.lambda_t))
    for (double c : values("lambda_c", base.lambda_c))
      for (double s : values("lambda_s", base.lambda_s)) grid.push_back({t, c, s});
  return grid;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(spec);
  std::string v;
  while (std::getline(ss, v, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(v, &used));
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw CommandError("bad --seeds value '" + v + "'", "seeds");
    }
  }
  if (seeds.empty()) throw CommandError("--seeds is empty", "seeds");
  return seeds;
}

json cmd_sweep(const config::RunConfig& cfg, const std::string& grid_spec, const std::string& seed_spec) {
  const auto ds = load_prepared(cfg);
  const auto grid = parse_grid(grid_spec, cfg.weights);
  const auto seeds = parse_seeds(seed_spec);
  const auto points = evaluate::sensitivity_sweep(ds, model_config(cfg, ds), cfg.train, grid, seeds);
  std::ostringstream s;
  s.precision(17);
  s << "lambda_t,lambda_c,lambda_s,runs,recall@1_mean,recall@1_sd\n";
  json rows = json::array();
  for (const auto& p : points) {
    s << p.weights.lambda_t << "," << p.weights.lambda_c << "," << p.weights.lambda_s << "," << p.recall1.size()
      << "," << p.mean << "," << p.sd << "\n";
    rows.push_back({{"lambda_t", p.weights.lambda_t},
                    {"lambda_c", p.weights.lambda_c},
                    {"lambda_s", p.weights.lambda_s},
                    {"recall@1", p.recall1},
                    {"mean", p.mean},
                    {"sd", p.sd}});
  }
  const fs::path out = cfg.output_dir / "sweep" / (std::string(model::to_string(cfg.model.variant)) + ".csv");
  write_text(out, csv_header(cfg) + s.str());
  json j;
  j["config_hash"] = config::config_hash(cfg);
  j["seeds"] = seeds;
  j["points"] = rows;
  j["table"] = out.string();
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSLSL next-location prediction"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string checkpoint;
  std::string grid_spec;
  std::string seed_spec;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool resume = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file")->required();
    sub->add_option("--set", sets, "override a configuration key: key=value");
  };
  auto with_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { seed = v; seed_given = true; }, "override the configured seed");
  };
  auto* prepare = app.add_subcommand("prepare", "ingest, clean and sessionize the raw check-ins");
  common(prepare);
  auto* train = app.add_subcommand("train", "fit a model on the prepared dataset");
  common(train);
  with_seed(train);
  train->add_flag("--resume", resume, "continue from the run's last checkpoint");
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on the test split");
  common(eval);
  with_seed(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file");
  auto* analyze = app.add_subcommand("analyze", "write causal, distance and grid analyses");
  common(analyze);
  with_seed(analyze);
  analyze->add_option("--checkpoint", checkpoint, "checkpoint file");
  auto* sweep = app.add_subcommand("sweep", "lambda sensitivity sweep");
  common(sweep);
  sweep->add_option("--lambda-grid", grid_spec, "e.g. lambda_t=1,10;lambda_c=10")->required();
  sweep->add_option("--seeds", seed_spec, "comma-separated seeds")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(), "usage", e.what());
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    config::KeyValues overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw config::ConfigError({"--set " + s + ": expected key=value"});
      overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    if (seed_given) overrides["seed"] = std::to_string(seed);
    const config::RunConfig cfg = config::load(config_path, overrides);

    json result;
    if (command == "prepare") {
      result = cmd_prepare(cfg);
    } else if (command == "train") {
      result = cmd_train(cfg, resume);
    } else if (command == "evaluate") {
      result = cmd_evaluate(cfg, default_checkpoint(cfg, checkpoint));
    } else if (command == "analyze") {
      result = cmd_analyze(cfg, default_checkpoint(cfg, checkpoint));
    } else {
      result = cmd_sweep(cfg, grid_spec, seed_spec);
    }
    std::cout << result.dump(2) << std::endl;
    return 0;
  } catch (const config::ConfigError& e) {
    fail_line(command, "config", e.what(), {{"problems", e.problems()}});
    return 2;
  } catch (const CommandError& e) {
    fail_line(command, "precondition", e.what(), {{"artifact", e.subject}});
    return 1;
  } catch (const std::exception& e) {
    fail_line(command, "runtime", e.what());
    return 1;
  }
}
