#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cslsl::ingest {

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SourceTag { foursquare, gowalla };

std::string_view to_string(SourceTag tag);
SourceTag source_tag_from_string(std::string_view s);

struct RawRecord {
  std::string user_key;
  std::string location_key;
  std::optional<std::string> category_name;
  int category_id = -1;  // dense id into RecordSet::categories, -1 when absent
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t utc_seconds = 0;
  int tz_offset_minutes = 0;

  std::int64_t local_seconds() const { return utc_seconds + 60 * std::int64_t{tz_offset_minutes}; }

  friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

struct Reject {
  std::size_t line = 0;  // 1-based
  std::string reason;

  friend bool operator==(const Reject&, const Reject&) = default;
};

struct RecordSet {
  std::vector<RawRecord> records;
  SourceTag source_tag = SourceTag::foursquare;
  // Distinct category names, sorted; category_id indexes this list.
  std::vector<std::string> categories;
  std::vector<Reject> rejects;
  // Non-blank lines seen; equals records.size() + rejects.size() right after parsing.
  std::size_t lines_read = 0;
  // Later sightings of a location key whose coordinates or category differ
  // from the first sighting. The first sighting wins.
  std::size_t location_conflicts = 0;

  friend bool operator==(const RecordSet&, const RecordSet&) = default;
};

// Civil-time helpers (proleptic Gregorian, UTC).
std::int64_t days_from_civil(int year, unsigned month, unsigned day);

struct CivilTime {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
  int day_of_week = 0;  // Monday = 0
};

CivilTime civil_from_seconds(std::int64_t seconds);

// "Tue Apr 03 18:00:06 +0000 2012" -> seconds since epoch (UTC).
std::optional<std::int64_t> parse_twitter_time(std::string_view text);
// "2010-10-19T23:55:27Z" -> seconds since epoch (UTC).
std::optional<std::int64_t> parse_iso8601_utc(std::string_view text);
std::string format_twitter_time(std::int64_t utc_seconds);

struct GowallaOptions {
  int tz_offset_minutes = 0;
};

RecordSet parse_foursquare(std::istream& in);
RecordSet parse_foursquare(const std::filesystem::path& path);
RecordSet parse_gowalla(std::istream& in, const GowallaOptions& options = {});
RecordSet parse_gowalla(const std::filesystem::path& path, const GowallaOptions& options = {});

// Canonical record file: a "# source=<tag>" line, then one record per line,
// tab-separated: user_key, location_key, category_id, lat, lon, utc_seconds,
// tz_offset_minutes.
void write_canonical(std::ostream& out, const RecordSet& rs);
RecordSet read_canonical(std::istream& in);
RecordSet read_canonical(const std::filesystem::path& path);

std::string format_double(double value);

// Sorts by (user_key, utc_seconds), stable with respect to input order.
void sort_records(std::vector<RawRecord>& records);

}  // namespace cslsl::ingest
