#include "cslsl/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace cslsl::preprocess {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) {
    --q;
  }
  return q;
}

}  // namespace

LocalTime local_time(std::int64_t local_seconds) {
  LocalTime t;
  t.local_day = floor_div(local_seconds, 86400);
  const std::int64_t sec_of_day = local_seconds - t.local_day * 86400;
  // 1970-01-01 was a Thursday: shifting by 3 days puts Mondays on multiples of 7.
  t.week_id = floor_div(t.local_day + 3, 7);
  t.day_of_week = static_cast<int>(t.local_day + 3 - t.week_id * 7);
  t.hour = static_cast<int>(sec_of_day / 3600);
  const int minute = static_cast<int>((sec_of_day % 3600) / 60);
  const int second = static_cast<int>(sec_of_day % 60);
  t.time_of_week =
      (t.day_of_week * 24.0 + t.hour + minute / 60.0 + second / 3600.0) / 168.0;
  return t;
}

int Vocab::user_index(const std::string& key) const {
  const auto it = user_lookup_.find(key);
  return it == user_lookup_.end() ? -1 : it->second;
}

int Vocab::location_index(const std::string& key) const {
  const auto it = location_lookup_.find(key);
  return it == location_lookup_.end() ? -1 : it->second;
}

void Vocab::reindex() {
  user_lookup_.clear();
  location_lookup_.clear();
  for (std::size_t i = 0; i < user_keys.size(); ++i) {
    user_lookup_.emplace(user_keys[i], static_cast<int>(i));
  }
  for (std::size_t i = 0; i < location_keys.size(); ++i) {
    location_lookup_.emplace(location_keys[i], static_cast<int>(i));
  }
}

DatasetCounts count(const ingest::RecordSet& rs) {
  std::set<std::string_view> users;
  std::set<std::string_view> locations;
  std::set<int> categories;
  for (const auto& r : rs.records) {
    users.insert(r.user_key);
    locations.insert(r.location_key);
    if (r.category_id >= 0) {
      categories.insert(r.category_id);
    }
  }
  return {users.size(), locations.size(), rs.records.size(), categories.size()};
}

DatasetCounts count(const ProcessedDataset& ds) {
  DatasetCounts c;
  c.users = ds.users.size();
  c.locations = static_cast<std::size_t>(ds.vocab.num_locations());
  c.categories = ds.vocab.has_categories ? static_cast<std::size_t>(ds.vocab.num_categories()) : 0;
  for (const auto& u : ds.users) {
    for (const auto& s : u.sessions) {
      c.records += s.records.size();
    }
  }
  return c;
}

ingest::RecordSet filter_sparse(const ingest::RecordSet& rs, int min_count) {
  if (min_count < 1) {
    throw PreprocessError("min_count must be >= 1");
  }
  ingest::RecordSet out = rs;
  const auto threshold = static_cast<std::size_t>(min_count);
  bool changed = true;
  while (changed) {
    std::unordered_map<std::string, std::size_t> per_location;
    for (const auto& r : out.records) {
      ++per_location[r.location_key];
    }
    const auto before = out.records.size();
    std::erase_if(out.records, [&](const ingest::RawRecord& r) { return per_location[r.location_key] < threshold; });

    std::unordered_map<std::string, std::size_t> per_user;
    for (const auto& r : out.records) {
      ++per_user[r.user_key];
    }
    std::erase_if(out.records, [&](const ingest::RawRecord& r) { return per_user[r.user_key] < threshold; });
    changed = out.records.size() != before;
  }
  if (out.records.empty()) {
    throw PreprocessError("dataset fully filtered");
  }
  return out;
}

ingest::RecordSet merge_consecutive(const ingest::RecordSet& rs) {
  ingest::RecordSet out = rs;
  out.records.clear();
  for (const auto& r : rs.records) {
    if (!out.records.empty()) {
      const auto& prev = out.records.back();
      if (prev.user_key == r.user_key && prev.location_key == r.location_key &&
          local_time(prev.local_seconds()).local_day == local_time(r.local_seconds()).local_day) {
        continue;
      }
    }
    out.records.push_back(r);
  }
  return out;
}

ProcessedDataset build_sessions(const ingest::RecordSet& rs, int min_session_records, int min_sessions) {
  struct Pending {
    std::int64_t week_id;
    std::vector<const ingest::RawRecord*> records;
  };
  // user key -> sessions, in record order (records are sorted by user, time).
  std::map<std::string, std::vector<Pending>> by_user;
  for (const auto& r : rs.records) {
    auto& sessions = by_user[r.user_key];
    const std::int64_t week = local_time(r.local_seconds()).week_id;
    if (sessions.empty() || sessions.back().week_id != week) {
      sessions.push_back({week, {}});
    }
    sessions.back().records.push_back(&r);
  }

  std::map<std::string, std::vector<Pending>> surviving;
  for (auto& [user, sessions] : by_user) {
    std::vector<Pending> kept;
    for (auto& s : sessions) {
      if (static_cast<int>(s.records.size()) >= min_session_records) {
        kept.push_back(std::move(s));
      }
    }
    if (static_cast<int>(kept.size()) >= min_sessions) {
      surviving.emplace(user, std::move(kept));
    }
  }
  if (surviving.empty()) {
    throw PreprocessError("no user satisfies the session minimums");
  }

  ProcessedDataset ds;
  Vocab& vocab = ds.vocab;
  std::map<std::string, const ingest::RawRecord*> first_of_location;
  std::set<int> category_ids;
  for (const auto& [user, sessions] : surviving) {
    vocab.user_keys.push_back(user);
    for (const auto& s : sessions) {
      for (const auto* r : s.records) {
        first_of_location.try_emplace(r->location_key, r);
        category_ids.insert(r->category_id);
      }
    }
  }
  vocab.has_categories = !(category_ids.size() == 1 && *category_ids.begin() == -1);
  if (vocab.has_categories && category_ids.contains(-1)) {
    throw PreprocessError("dataset mixes records with and without categories");
  }
  std::map<int, int> cat_index;
  for (const int id : category_ids) {
    cat_index.emplace(id, static_cast<int>(vocab.category_ids.size()));
    vocab.category_ids.push_back(id);
    if (id >= 0 && static_cast<std::size_t>(id) < rs.categories.size()) {
      vocab.category_names.push_back(rs.categories[static_cast<std::size_t>(id)]);
    } else {
      vocab.category_names.push_back(id < 0 ? std::string("none") : std::to_string(id));
    }
  }
  for (const auto& [key, r] : first_of_location) {
    vocab.location_keys.push_back(key);
    vocab.location_coords.push_back({r->lat, r->lon});
    vocab.location_category.push_back(cat_index.at(r->category_id));
  }
  vocab.reindex();

  for (const auto& [user, sessions] : surviving) {
    SessionizedUser su;
    su.user_index = vocab.user_index(user);
    for (const auto& s : sessions) {
      Session session;
      session.week_id = s.week_id;
      for (const auto* r : s.records) {
        const LocalTime t = local_time(r->local_seconds());
        SessionRecord sr;
        sr.loc = vocab.location_index(r->location_key);
        sr.cat = cat_index.at(r->category_id);
        sr.hour = t.hour;
        sr.day = t.day_of_week;
        sr.time_of_week = t.time_of_week;
        sr.utc_seconds = r->utc_seconds;
        sr.tz_offset_minutes = r->tz_offset_minutes;
        session.records.push_back(sr);
      }
      su.sessions.push_back(std::move(session));
    }
    ds.users.push_back(std::move(su));
  }
  return ds;
}

std::size_t split_index(std::size_t num_sessions, double ratio) {
  // The epsilon absorbs representation error in products like 0.8 * 10.
  const double raw = ratio * static_cast<double>(num_sessions);
  return std::min(num_sessions, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

void split_train_test(std::vector<SessionizedUser>& users, double ratio) {
  for (auto& u : users) {
    u.split_point = split_index(u.sessions.size(), ratio);
  }
}

ingest::RecordSet clean(const ingest::RecordSet& rs, const PipelineOptions& options, PipelineReport* report) {
  ingest::RecordSet current = filter_sparse(rs, options.min_count);
  if (report) {
    report->filtered = count(current);
  }
  current = merge_consecutive(current);
  std::size_t rounds = 1;
  while (options.joint_fixpoint) {
    ingest::RecordSet next = merge_consecutive(filter_sparse(current, options.min_count));
    if (next.records.size() == current.records.size()) {
      break;
    }
    current = std::move(next);
    ++rounds;
  }
  if (report) {
    report->merged = count(current);
    report->rounds = rounds;
  }
  return current;
}

ProcessedDataset run_pipeline(const ingest::RecordSet& rs, const PipelineOptions& options,
                              PipelineReport* report) {
  if (report) {
    report->raw = count(rs);
  }
  const ingest::RecordSet cleaned = clean(rs, options, report);
  ProcessedDataset ds = build_sessions(cleaned, options.min_session_records, options.min_sessions);
  split_train_test(ds.users, options.train_ratio);
  if (report) {
    report->processed = count(ds);
  }
  return ds;
}

}  // namespace cslsl::preprocess
