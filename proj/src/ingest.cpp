#include "cslsl/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <chrono>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace cslsl::ingest {

namespace {

constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                       "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
constexpr std::array<std::string_view, 7> kWeekdays = {"Mon", "Tue", "Wed", "Thu",
                                                       "Fri", "Sat", "Sun"};

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) {
    --q;
  }
  return q;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') {
    s.remove_prefix(1);
  }
  if (s.empty()) {
    return std::nullopt;
  }
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    return std::nullopt;
  }
  return value;
}

std::optional<int> parse_fixed_digits(std::string_view s, std::size_t width) {
  if (s.size() != width || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return parse_number<int>(s);
}

bool valid_clock(int h, int m, int sec) {
  return h >= 0 && h < 24 && m >= 0 && m < 60 && sec >= 0 && sec < 60;
}

std::optional<std::int64_t> civil_to_seconds(int year, int month, int day, int h, int m, int s) {
  using namespace std::chrono;
  if (month < 1 || month > 12 || day < 1 || day > 31 || !valid_clock(h, m, s)) {
    return std::nullopt;
  }
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) {
    return std::nullopt;
  }
  return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400 +
         h * 3600 + m * 60 + s;
}

std::optional<std::string> validate_coords(double lat, double lon) {
  if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0) {
    return "latitude out of range";
  }
  if (!std::isfinite(lon) || lon < -180.0 || lon > 180.0) {
    return "longitude out of range";
  }
  return std::nullopt;
}

// First sighting of a location key is canonical; later conflicting sightings
// are overwritten and tallied. Then categories get dense sorted ids.
void finalize(RecordSet& rs) {
  struct Canon {
    double lat;
    double lon;
    std::optional<std::string> category;
  };
  std::map<std::string, Canon, std::less<>> canon;
  for (auto& r : rs.records) {
    auto [it, inserted] = canon.try_emplace(r.location_key, Canon{r.lat, r.lon, r.category_name});
    if (!inserted) {
      const Canon& c = it->second;
      if (c.lat != r.lat || c.lon != r.lon || c.category != r.category_name) {
        ++rs.location_conflicts;
        r.lat = c.lat;
        r.lon = c.lon;
        r.category_name = c.category;
      }
    }
  }
  std::set<std::string> names;
  for (const auto& r : rs.records) {
    if (r.category_name) {
      names.insert(*r.category_name);
    }
  }
  rs.categories.assign(names.begin(), names.end());
  for (auto& r : rs.records) {
    if (r.category_name) {
      const auto it = std::lower_bound(rs.categories.begin(), rs.categories.end(), *r.category_name);
      r.category_id = static_cast<int>(it - rs.categories.begin());
    } else {
      r.category_id = -1;
    }
  }
  sort_records(rs.records);
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IngestError("cannot open " + path.string());
  }
  return in;
}

template <typename LineFn>
void for_each_line(std::istream& in, RecordSet& rs, LineFn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') {
      view.remove_suffix(1);
    }
    if (trim(view).empty()) {
      continue;
    }
    ++rs.lines_read;
    std::string reason;
    if (auto rec = fn(view, reason)) {
      rs.records.push_back(std::move(*rec));
    } else {
      rs.rejects.push_back({line_no, std::move(reason)});
    }
  }
  if (in.bad()) {
    throw IngestError("read error");
  }
}

}  // namespace

std::string_view to_string(SourceTag tag) {
  return tag == SourceTag::foursquare ? "foursquare" : "gowalla";
}

SourceTag source_tag_from_string(std::string_view s) {
  if (s == "foursquare") {
    return SourceTag::foursquare;
  }
  if (s == "gowalla") {
    return SourceTag::gowalla;
  }
  throw IngestError("unknown source tag: " + std::string(s));
}

std::int64_t days_from_civil(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const sys_days d{year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}}};
  return d.time_since_epoch().count();
}

CivilTime civil_from_seconds(std::int64_t seconds) {
  using namespace std::chrono;
  const std::int64_t days = floor_div(seconds, 86400);
  const std::int64_t rem = seconds - days * 86400;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  CivilTime t;
  t.year = static_cast<int>(ymd.year());
  t.month = static_cast<unsigned>(ymd.month());
  t.day = static_cast<unsigned>(ymd.day());
  t.hour = static_cast<int>(rem / 3600);
  t.minute = static_cast<int>((rem % 3600) / 60);
  t.second = static_cast<int>(rem % 60);
  // 1970-01-01 was a Thursday.
  t.day_of_week = static_cast<int>(((days + 3) % 7 + 7) % 7);
  return t;
}

std::optional<std::int64_t> parse_twitter_time(std::string_view text) {
  const auto parts = split(trim(text), ' ');
  if (parts.size() != 6) {
    return std::nullopt;
  }
  const auto wd = std::find(kWeekdays.begin(), kWeekdays.end(), parts[0]);
  const auto mon = std::find(kMonths.begin(), kMonths.end(), parts[1]);
  if (wd == kWeekdays.end() || mon == kMonths.end()) {
    return std::nullopt;
  }
  const auto day = parse_fixed_digits(parts[2], 2);
  const auto clock = split(parts[3], ':');
  if (!day || clock.size() != 3) {
    return std::nullopt;
  }
  const auto hh = parse_fixed_digits(clock[0], 2);
  const auto mm = parse_fixed_digits(clock[1], 2);
  const auto ss = parse_fixed_digits(clock[2], 2);
  const std::string_view zone = parts[4];
  const auto year = parse_fixed_digits(parts[5], 4);
  if (!hh || !mm || !ss || !year || zone.size() != 5 || (zone[0] != '+' && zone[0] != '-')) {
    return std::nullopt;
  }
  const auto zh = parse_fixed_digits(zone.substr(1, 2), 2);
  const auto zm = parse_fixed_digits(zone.substr(3, 2), 2);
  if (!zh || !zm || *zm >= 60) {
    return std::nullopt;
  }
  auto secs = civil_to_seconds(*year, static_cast<int>(mon - kMonths.begin()) + 1, *day, *hh, *mm, *ss);
  if (!secs) {
    return std::nullopt;
  }
  const std::int64_t zone_seconds = (zone[0] == '-' ? -1 : 1) * (*zh * 3600 + *zm * 60);
  // Weekday in the string refers to the wall clock it was printed in.
  if (civil_from_seconds(*secs).day_of_week != static_cast<int>(wd - kWeekdays.begin())) {
    return std::nullopt;
  }
  return *secs - zone_seconds;
}

std::optional<std::int64_t> parse_iso8601_utc(std::string_view text) {
  text = trim(text);
  // YYYY-MM-DDTHH:MM:SSZ
  if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' ||
      text[16] != ':' || text[19] != 'Z') {
    return std::nullopt;
  }
  const auto y = parse_fixed_digits(text.substr(0, 4), 4);
  const auto mo = parse_fixed_digits(text.substr(5, 2), 2);
  const auto d = parse_fixed_digits(text.substr(8, 2), 2);
  const auto h = parse_fixed_digits(text.substr(11, 2), 2);
  const auto mi = parse_fixed_digits(text.substr(14, 2), 2);
  const auto s = parse_fixed_digits(text.substr(17, 2), 2);
  if (!y || !mo || !d || !h || !mi || !s) {
    return std::nullopt;
  }
  return civil_to_seconds(*y, *mo, *d, *h, *mi, *s);
}

std::string format_twitter_time(std::int64_t utc_seconds) {
  const CivilTime t = civil_from_seconds(utc_seconds);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s %s %02u %02d:%02d:%02d +0000 %04d",
                std::string(kWeekdays[static_cast<std::size_t>(t.day_of_week)]).c_str(),
                std::string(kMonths[t.month - 1]).c_str(), t.day, t.hour, t.minute, t.second, t.year);
  return buf;
}

RecordSet parse_foursquare(std::istream& in) {
  RecordSet rs;
  rs.source_tag = SourceTag::foursquare;
  for_each_line(in, rs, [](std::string_view line, std::string& reason) -> std::optional<RawRecord> {
    const auto f = split(line, '\t');
    if (f.size() != 8) {
      reason = "expected 8 fields, got " + std::to_string(f.size());
      return std::nullopt;
    }
    RawRecord r;
    r.user_key = std::string(trim(f[0]));
    r.location_key = std::string(trim(f[1]));
    if (r.user_key.empty() || r.location_key.empty()) {
      reason = "empty user or venue id";
      return std::nullopt;
    }
    r.category_name = std::string(trim(f[3]));
    const auto lat = parse_number<double>(f[4]);
    const auto lon = parse_number<double>(f[5]);
    const auto offset = parse_number<int>(f[6]);
    const auto utc = parse_twitter_time(f[7]);
    if (!lat || !lon) {
      reason = "unparsable coordinate";
      return std::nullopt;
    }
    if (auto bad = validate_coords(*lat, *lon)) {
      reason = *bad;
      return std::nullopt;
    }
    if (!offset) {
      reason = "unparsable timezone offset";
      return std::nullopt;
    }
    if (!utc || *utc <= 0) {
      reason = "unparsable timestamp";
      return std::nullopt;
    }
    r.lat = *lat;
    r.lon = *lon;
    r.tz_offset_minutes = *offset;
    r.utc_seconds = *utc;
    return r;
  });
  finalize(rs);
  return rs;
}

RecordSet parse_foursquare(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_foursquare(in);
}

RecordSet parse_gowalla(std::istream& in, const GowallaOptions& options) {
  RecordSet rs;
  rs.source_tag = SourceTag::gowalla;
  for_each_line(in, rs, [&](std::string_view line, std::string& reason) -> std::optional<RawRecord> {
    const auto f = split(line, '\t');
    if (f.size() != 5) {
      reason = "expected 5 fields, got " + std::to_string(f.size());
      return std::nullopt;
    }
    RawRecord r;
    r.user_key = std::string(trim(f[0]));
    r.location_key = std::string(trim(f[4]));
    if (r.user_key.empty() || r.location_key.empty()) {
      reason = "empty user or location id";
      return std::nullopt;
    }
    const auto utc = parse_iso8601_utc(f[1]);
    const auto lat = parse_number<double>(f[2]);
    const auto lon = parse_number<double>(f[3]);
    if (!lat || !lon) {
      reason = "unparsable coordinate";
      return std::nullopt;
    }
    if (auto bad = validate_coords(*lat, *lon)) {
      reason = *bad;
      return std::nullopt;
    }
    if (!utc || *utc <= 0) {
      reason = "unparsable timestamp";
      return std::nullopt;
    }
    r.lat = *lat;
    r.lon = *lon;
    r.utc_seconds = *utc;
    r.tz_offset_minutes = options.tz_offset_minutes;
    return r;
  });
  finalize(rs);
  return rs;
}

RecordSet parse_gowalla(const std::filesystem::path& path, const GowallaOptions& options) {
  auto in = open_or_throw(path);
  return parse_gowalla(in, options);
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_canonical(std::ostream& out, const RecordSet& rs) {
  out << "# source=" << to_string(rs.source_tag) << '\n';
  for (const auto& r : rs.records) {
    out << r.user_key << '\t' << r.location_key << '\t' << r.category_id << '\t' << format_double(r.lat)
        << '\t' << format_double(r.lon) << '\t' << r.utc_seconds << '\t' << r.tz_offset_minutes << '\n';
  }
}

RecordSet read_canonical(std::istream& in) {
  RecordSet rs;
  std::string line;
  std::size_t line_no = 0;
  int max_category = -1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) {
      continue;
    }
    if (view.front() == '#') {
      constexpr std::string_view kSource = "# source=";
      if (view.starts_with(kSource)) {
        rs.source_tag = source_tag_from_string(view.substr(kSource.size()));
      }
      continue;
    }
    ++rs.lines_read;
    const auto f = split(view, '\t');
    std::optional<int> cat;
    std::optional<double> lat;
    std::optional<double> lon;
    std::optional<std::int64_t> utc;
    std::optional<int> tz;
    if (f.size() == 7) {
      cat = parse_number<int>(f[2]);
      lat = parse_number<double>(f[3]);
      lon = parse_number<double>(f[4]);
      utc = parse_number<std::int64_t>(f[5]);
      tz = parse_number<int>(f[6]);
    }
    if (!cat || !lat || !lon || !utc || !tz || *cat < -1 || *utc <= 0 || validate_coords(*lat, *lon)) {
      rs.rejects.push_back({line_no, "malformed canonical record"});
      continue;
    }
    RawRecord r;
    r.user_key = std::string(f[0]);
    r.location_key = std::string(f[1]);
    r.category_id = *cat;
    r.lat = *lat;
    r.lon = *lon;
    r.utc_seconds = *utc;
    r.tz_offset_minutes = *tz;
    max_category = std::max(max_category, *cat);
    rs.records.push_back(std::move(r));
  }
  // Names are not part of the canonical file; ids stand in for them.
  for (int c = 0; c <= max_category; ++c) {
    rs.categories.push_back(std::to_string(c));
  }
  sort_records(rs.records);
  return rs;
}

RecordSet read_canonical(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_canonical(in);
}

void sort_records(std::vector<RawRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const RawRecord& a, const RawRecord& b) {
    if (a.user_key != b.user_key) {
      return a.user_key < b.user_key;
    }
    return a.utc_seconds < b.utc_seconds;
  });
}

}  // namespace cslsl::ingest
