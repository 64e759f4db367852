#include "cslsl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <sstream>

namespace cslsl::config {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration";
  for (const auto& p : problems) {
    msg += "; " + p;
  }
  return msg;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

fs::path RunConfig::run_dir() const {
  return output_dir / "runs" / (std::string(model::to_string(model.variant)) + "-seed" + std::to_string(seed));
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::vector<std::string> problems;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(n) + ": expected key = value");
      continue;
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (kv.contains(key)) {
      problems.push_back("line " + std::to_string(n) + ": duplicate key " + key);
    }
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  if (!problems.empty()) {
    throw ConfigError(problems);
  }
  return kv;
}

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError({"config: cannot open " + path.string()});
  }
  return parse_key_values(in);
}

RunConfig from_key_values(const KeyValues& kv, const fs::path& base_dir) {
  RunConfig cfg;
  std::vector<std::string> problems;

  auto integer = [&](auto& field, long long lo, long long hi) {
    return [&field, lo, hi, &problems](const std::string& key, const std::string& v) {
      long long x = 0;
      if (!parse_number(v, x) || x < lo || x > hi) {
        problems.push_back(key + ": expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                           "], got '" + v + "'");
        return;
      }
      field = static_cast<std::remove_reference_t<decltype(field)>>(x);
    };
  };
  auto positive = [&](int& field) { return integer(field, 1, 1'000'000'000); };
  auto real_in = [&](double& field, double lo, bool open_lo, double hi) {
    return [&field, lo, open_lo, hi, &problems](const std::string& key, const std::string& v) {
      double x = 0.0;
      const bool ok = parse_number(v, x) && std::isfinite(x) && (open_lo ? x > lo : x >= lo) && x <= hi;
      if (!ok) {
        problems.push_back(key + ": expected a number in " + (open_lo ? "(" : "[") + real(lo) + ", " + real(hi) +
                           "], got '" + v + "'");
        return;
      }
      field = x;
    };
  };
  auto path = [&](fs::path& field) {
    return [&field, &base_dir](const std::string&, const std::string& v) {
      fs::path p(v);
      field = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr long long kMaxInt = 1'000'000'000;

  std::size_t batch_size = cfg.train.batch_size;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"data.path", path(cfg.data_path)},
      {"data.format",
       [&](const std::string& key, const std::string& v) {
         try {
           cfg.format = ingest::source_tag_from_string(v);
         } catch (const std::exception&) {
           problems.push_back(key + ": expected foursquare or gowalla, got '" + v + "'");
         }
       }},
      {"data.tz_offset_minutes", integer(cfg.tz_offset_minutes, -14 * 60, 14 * 60)},
      {"prep.min_count", integer(cfg.prep.min_count, 1, kMaxInt)},
      {"prep.min_session_records", integer(cfg.prep.min_session_records, 2, kMaxInt)},
      {"prep.min_sessions", integer(cfg.prep.min_sessions, 2, kMaxInt)},
      {"prep.train_ratio", real_in(cfg.prep.train_ratio, 0.0, true, 1.0)},
      {"prep.joint_fixpoint",
       [&](const std::string& key, const std::string& v) {
         if (v == "true" || v == "1") {
           cfg.prep.joint_fixpoint = true;
         } else if (v == "false" || v == "0") {
           cfg.prep.joint_fixpoint = false;
         } else {
           problems.push_back(key + ": expected true or false, got '" + v + "'");
         }
       }},
      {"model.variant",
       [&](const std::string& key, const std::string& v) {
         try {
           cfg.model.variant = model::variant_from_string(v);
         } catch (const std::exception&) {
           problems.push_back(key + ": unknown variant '" + v + "'");
         }
       }},
      {"model.dim_location", positive(cfg.model.dim_location)},
      {"model.dim_category", positive(cfg.model.dim_category)},
      {"model.dim_hour", positive(cfg.model.dim_hour)},
      {"model.dim_day", positive(cfg.model.dim_day)},
      {"model.dim_user", positive(cfg.model.dim_user)},
      {"model.hidden", positive(cfg.model.hidden)},
      {"loss.lambda_t", real_in(cfg.weights.lambda_t, 0.0, false, kInf)},
      {"loss.lambda_c", real_in(cfg.weights.lambda_c, 0.0, false, kInf)},
      {"loss.lambda_s", real_in(cfg.weights.lambda_s, 0.0, false, kInf)},
      {"train.batch_size", integer(batch_size, 1, kMaxInt)},
      {"train.epochs", positive(cfg.train.epochs)},
      {"train.patience", integer(cfg.train.patience, 0, kMaxInt)},
      {"train.lr", real_in(cfg.train.adam.lr, 0.0, true, kInf)},
      {"train.clip_norm", real_in(cfg.train.clip_norm, 0.0, false, kInf)},
      {"seed",
       [&](const std::string& key, const std::string& v) {
         if (!parse_number(v, cfg.seed)) problems.push_back(key + ": expected an unsigned integer, got '" + v + "'");
       }},
      {"output_dir", path(cfg.output_dir)},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      problems.push_back(key + ": unknown key");
      continue;
    }
    it->second(key, value);
  }
  if (cfg.output_dir.empty()) {
    problems.emplace_back("output_dir: required");
  }
  cfg.train.batch_size = batch_size;
  cfg.train.weights = cfg.weights;
  cfg.train.seed = cfg.seed;
  if (!problems.empty()) {
    throw ConfigError(problems);
  }
  return cfg;
}

RunConfig load(const fs::path& path, const KeyValues& overrides) {
  KeyValues kv = read_key_values(path);
  for (const auto& [k, v] : overrides) {
    kv[k] = v;
  }
  return from_key_values(kv, path.parent_path());
}

namespace {

std::string canonical_impl(const RunConfig& cfg, bool identity) {
  std::ostringstream s;
  s << "data.format=" << ingest::to_string(cfg.format) << "\n";
  s << "data.tz_offset_minutes=" << cfg.tz_offset_minutes << "\n";
  s << "prep.min_count=" << cfg.prep.min_count << "\n";
  s << "prep.min_session_records=" << cfg.prep.min_session_records << "\n";
  s << "prep.min_sessions=" << cfg.prep.min_sessions << "\n";
  s << "prep.train_ratio=" << real(cfg.prep.train_ratio) << "\n";
  s << "prep.joint_fixpoint=" << (cfg.prep.joint_fixpoint ? "true" : "false") << "\n";
  s << "model.variant=" << model::to_string(cfg.model.variant) << "\n";
  s << "model.dim_location=" << cfg.model.dim_location << "\n";
  s << "model.dim_category=" << cfg.model.dim_category << "\n";
  s << "model.dim_hour=" << cfg.model.dim_hour << "\n";
  s << "model.dim_day=" << cfg.model.dim_day << "\n";
  s << "model.dim_user=" << cfg.model.dim_user << "\n";
  s << "model.hidden=" << cfg.model.hidden << "\n";
  s << "loss.lambda_t=" << real(cfg.weights.lambda_t) << "\n";
  s << "loss.lambda_c=" << real(cfg.weights.lambda_c) << "\n";
  s << "loss.lambda_s=" << real(cfg.weights.lambda_s) << "\n";
  s << "train.batch_size=" << cfg.train.batch_size << "\n";
  s << "train.epochs=" << cfg.train.epochs << "\n";
  s << "train.patience=" << cfg.train.patience << "\n";
  s << "train.lr=" << real(cfg.train.adam.lr) << "\n";
  s << "train.clip_norm=" << real(cfg.train.clip_norm) << "\n";
  if (!identity) {
    s << "data.path=" << cfg.data_path.string() << "\n";
    s << "seed=" << cfg.seed << "\n";
    s << "output_dir=" << cfg.output_dir.string() << "\n";
  }
  return s.str();
}

}  // namespace

std::string canonical(const RunConfig& cfg) { return canonical_impl(cfg, false); }

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_impl(cfg, true)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cslsl::config
