#include "cslsl/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace cslsl::io {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, '\t')) {
    out.push_back(field);
  }
  if (!line.empty() && line.back() == '\t') {
    out.emplace_back();
  }
  return out;
}

template <typename T>
T to_number(const std::string& s, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError(std::string("bad ") + what + ": '" + s + "'");
  }
  return value;
}

bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty() && line.front() != '#') {
      return true;
    }
  }
  return false;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  return in;
}

}  // namespace

void write_header(std::ostream& out, std::string_view kind, const Header& header) {
  out << "# cslsl " << kind << " v1\n";
  for (const auto& [k, v] : header) {
    out << "# " << k << '=' << v << '\n';
  }
}

Header read_header(std::istream& in, std::string_view kind) {
  std::string line;
  const std::string magic = "# cslsl " + std::string(kind) + " v1";
  if (!std::getline(in, line) || line != magic) {
    throw FormatError("missing '" + magic + "' header");
  }
  Header header;
  while (in.peek() == '#') {
    std::getline(in, line);
    const auto eq = line.find('=');
    if (line.size() > 2 && eq != std::string::npos) {
      header[line.substr(2, eq - 2)] = line.substr(eq + 1);
    }
  }
  return header;
}

void write_vocab(std::ostream& out, const preprocess::Vocab& vocab, const Header& header) {
  write_header(out, "vocab", header);
  out << "has_categories\t" << (vocab.has_categories ? 1 : 0) << '\n';
  for (int i = 0; i < vocab.num_users(); ++i) {
    out << "user\t" << i << '\t' << vocab.user_keys[static_cast<std::size_t>(i)] << '\n';
  }
  for (int i = 0; i < vocab.num_categories(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out << "category\t" << i << '\t' << vocab.category_ids[k] << '\t' << vocab.category_names[k] << '\n';
  }
  for (int i = 0; i < vocab.num_locations(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out << "location\t" << i << '\t' << vocab.location_keys[k] << '\t'
        << ingest::format_double(vocab.location_coords[k].lat) << '\t'
        << ingest::format_double(vocab.location_coords[k].lon) << '\t' << vocab.location_category[k] << '\n';
  }
}

preprocess::Vocab read_vocab(std::istream& in, Header* header) {
  Header h = read_header(in, "vocab");
  if (header) {
    *header = std::move(h);
  }
  preprocess::Vocab vocab;
  std::string line;
  auto expect_index = [](const std::string& field, std::size_t expected) {
    if (to_number<std::size_t>(field, "index") != expected) {
      throw FormatError("vocab indices must be contiguous from 0");
    }
  };
  while (next_data_line(in, line)) {
    const auto f = split_tabs(line);
    if (f[0] == "has_categories" && f.size() == 2) {
      vocab.has_categories = f[1] == "1";
    } else if (f[0] == "user" && f.size() == 3) {
      expect_index(f[1], vocab.user_keys.size());
      vocab.user_keys.push_back(f[2]);
    } else if (f[0] == "category" && f.size() == 4) {
      expect_index(f[1], vocab.category_ids.size());
      vocab.category_ids.push_back(to_number<int>(f[2], "category id"));
      vocab.category_names.push_back(f[3]);
    } else if (f[0] == "location" && f.size() == 6) {
      expect_index(f[1], vocab.location_keys.size());
      vocab.location_keys.push_back(f[2]);
      vocab.location_coords.push_back({to_number<double>(f[3], "lat"), to_number<double>(f[4], "lon")});
      vocab.location_category.push_back(to_number<int>(f[5], "category index"));
    } else {
      throw FormatError("unexpected vocab line: " + line);
    }
  }
  for (const int c : vocab.location_category) {
    if (c < 0 || c >= vocab.num_categories()) {
      throw FormatError("location category index out of range");
    }
  }
  vocab.reindex();
  return vocab;
}

void write_processed(std::ostream& out, const preprocess::ProcessedDataset& ds, const Header& header) {
  const auto& vocab = ds.vocab;
  write_header(out, "processed", header);
  out << "counts\t" << ds.users.size() << '\t' << vocab.num_locations() << '\t' << vocab.num_categories() << '\n';
  for (const auto& u : ds.users) {
    const auto& user_key = vocab.user_keys[static_cast<std::size_t>(u.user_index)];
    out << "user\t" << user_key << '\t' << u.sessions.size() << '\t' << u.split_point << '\n';
    for (const auto& s : u.sessions) {
      out << "session\t" << s.week_id << '\t' << s.records.size() << '\n';
      for (const auto& r : s.records) {
        const auto loc = static_cast<std::size_t>(r.loc);
        out << user_key << '\t' << vocab.location_keys[loc] << '\t'
            << vocab.category_ids[static_cast<std::size_t>(r.cat)] << '\t'
            << ingest::format_double(vocab.location_coords[loc].lat) << '\t'
            << ingest::format_double(vocab.location_coords[loc].lon) << '\t' << r.utc_seconds << '\t'
            << r.tz_offset_minutes << '\n';
      }
    }
  }
}

preprocess::ProcessedDataset read_processed(std::istream& processed, std::istream& vocab_in, Header* header) {
  preprocess::ProcessedDataset ds;
  ds.vocab = read_vocab(vocab_in);
  Header h = read_header(processed, "processed");
  if (header) {
    *header = std::move(h);
  }
  const auto& vocab = ds.vocab;
  std::map<int, int> cat_index;
  for (int i = 0; i < vocab.num_categories(); ++i) {
    cat_index.emplace(vocab.category_ids[static_cast<std::size_t>(i)], i);
  }
  std::string line;
  if (!next_data_line(processed, line)) {
    throw FormatError("processed file has no counts line");
  }
  auto f = split_tabs(line);
  if (f.size() != 4 || f[0] != "counts") {
    throw FormatError("expected counts line");
  }
  const auto num_users = to_number<std::size_t>(f[1], "user count");
  if (to_number<int>(f[2], "location count") != vocab.num_locations() ||
      to_number<int>(f[3], "category count") != vocab.num_categories() ||
      num_users != static_cast<std::size_t>(vocab.num_users())) {
    throw FormatError("processed counts disagree with vocabulary");
  }
  for (std::size_t u = 0; u < num_users; ++u) {
    if (!next_data_line(processed, line) || (f = split_tabs(line)).size() != 4 || f[0] != "user") {
      throw FormatError("expected user line");
    }
    preprocess::SessionizedUser su;
    su.user_index = vocab.user_index(f[1]);
    if (su.user_index < 0) {
      throw FormatError("unknown user " + f[1]);
    }
    const auto num_sessions = to_number<std::size_t>(f[2], "session count");
    su.split_point = to_number<std::size_t>(f[3], "split point");
    for (std::size_t s = 0; s < num_sessions; ++s) {
      if (!next_data_line(processed, line) || (f = split_tabs(line)).size() != 3 || f[0] != "session") {
        throw FormatError("expected session line");
      }
      preprocess::Session session;
      session.week_id = to_number<std::int64_t>(f[1], "week id");
      const auto num_records = to_number<std::size_t>(f[2], "record count");
      for (std::size_t r = 0; r < num_records; ++r) {
        if (!next_data_line(processed, line) || (f = split_tabs(line)).size() != 7) {
          throw FormatError("expected record line");
        }
        preprocess::SessionRecord rec;
        rec.loc = vocab.location_index(f[1]);
        const auto cat = cat_index.find(to_number<int>(f[2], "category id"));
        if (rec.loc < 0 || cat == cat_index.end()) {
          throw FormatError("record references unknown location or category: " + line);
        }
        rec.cat = cat->second;
        rec.utc_seconds = to_number<std::int64_t>(f[5], "utc seconds");
        rec.tz_offset_minutes = to_number<int>(f[6], "tz offset");
        const auto t = preprocess::local_time(rec.utc_seconds + 60 * std::int64_t{rec.tz_offset_minutes});
        rec.hour = t.hour;
        rec.day = t.day_of_week;
        rec.time_of_week = t.time_of_week;
        session.records.push_back(rec);
      }
      su.sessions.push_back(std::move(session));
    }
    ds.users.push_back(std::move(su));
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const preprocess::ProcessedDataset& ds, const Header& header) {
  std::filesystem::create_directories(dir);
  auto vocab_out = open_out(dir / kVocabFile);
  write_vocab(vocab_out, ds.vocab, header);
  auto processed_out = open_out(dir / kProcessedFile);
  write_processed(processed_out, ds, header);
}

preprocess::ProcessedDataset load_dataset(const std::filesystem::path& dir, Header* header) {
  auto vocab_in = open_in(dir / kVocabFile);
  auto processed_in = open_in(dir / kProcessedFile);
  return read_processed(processed_in, vocab_in, header);
}

}  // namespace cslsl::io
