#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cslsl/geo.hpp"
#include "cslsl/ingest.hpp"

namespace cslsl::preprocess {

class PreprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Calendar features of a local timestamp. Weeks start on Monday (ISO-8601).
struct LocalTime {
  std::int64_t local_day = 0;  // days since 1970-01-01 in local time
  std::int64_t week_id = 0;    // Monday-aligned week index
  int day_of_week = 0;         // Monday = 0
  int hour = 0;
  double time_of_week = 0.0;   // fraction of the week elapsed, in [0, 1)
};

LocalTime local_time(std::int64_t local_seconds);

struct Vocab {
  std::vector<std::string> user_keys;
  std::vector<std::string> location_keys;
  // Source category id per category index; a dataset without categories has a
  // single shared category with id -1.
  std::vector<int> category_ids;
  std::vector<std::string> category_names;
  std::vector<geo::GeoPoint> location_coords;
  std::vector<int> location_category;
  bool has_categories = false;

  int num_users() const { return static_cast<int>(user_keys.size()); }
  int num_locations() const { return static_cast<int>(location_keys.size()); }
  int num_categories() const { return static_cast<int>(category_ids.size()); }

  int user_index(const std::string& key) const;
  int location_index(const std::string& key) const;

  // Rebuilds the key lookups after the key vectors change.
  void reindex();

 private:
  std::unordered_map<std::string, int> user_lookup_;
  std::unordered_map<std::string, int> location_lookup_;
};

struct SessionRecord {
  int loc = 0;
  int cat = 0;
  int hour = 0;
  int day = 0;
  double time_of_week = 0.0;
  std::int64_t utc_seconds = 0;
  int tz_offset_minutes = 0;

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

struct Session {
  std::int64_t week_id = 0;
  std::vector<SessionRecord> records;

  friend bool operator==(const Session&, const Session&) = default;
};

struct SessionizedUser {
  int user_index = 0;
  std::vector<Session> sessions;
  std::size_t split_point = 0;  // sessions [0, split_point) train, the rest test

  friend bool operator==(const SessionizedUser&, const SessionizedUser&) = default;
};

struct ProcessedDataset {
  Vocab vocab;
  std::vector<SessionizedUser> users;
};

struct DatasetCounts {
  std::size_t users = 0;
  std::size_t locations = 0;
  std::size_t records = 0;
  std::size_t categories = 0;

  friend bool operator==(const DatasetCounts&, const DatasetCounts&) = default;
};

DatasetCounts count(const ingest::RecordSet& rs);
DatasetCounts count(const ProcessedDataset& ds);

// Alternates a location filter and a user filter until every surviving user
// and location has at least `min_count` records.
ingest::RecordSet filter_sparse(const ingest::RecordSet& rs, int min_count = 10);

// Collapses runs of consecutive same-location records of one user on one
// local calendar day into the earliest record of the run.
ingest::RecordSet merge_consecutive(const ingest::RecordSet& rs);

ProcessedDataset build_sessions(const ingest::RecordSet& rs, int min_session_records = 2,
                                int min_sessions = 5);

std::size_t split_index(std::size_t num_sessions, double ratio);
void split_train_test(std::vector<SessionizedUser>& users, double ratio = 0.8);

struct PipelineOptions {
  int min_count = 10;
  int min_session_records = 2;
  int min_sessions = 5;
  double train_ratio = 0.8;
  // Repeat filter+merge until neither changes the data. A single pass
  // otherwise.
  bool joint_fixpoint = true;
};

struct PipelineReport {
  DatasetCounts raw;
  DatasetCounts filtered;  // after the first filter pass
  DatasetCounts merged;    // after filter+merge (to fixpoint when enabled)
  DatasetCounts processed;
  std::size_t rounds = 0;
};

// filter_sparse and merge_consecutive, repeated to a joint fixpoint when
// enabled.
ingest::RecordSet clean(const ingest::RecordSet& rs, const PipelineOptions& options,
                        PipelineReport* report = nullptr);

ProcessedDataset run_pipeline(const ingest::RecordSet& rs, const PipelineOptions& options,
                              PipelineReport* report = nullptr);

}  // namespace cslsl::preprocess
