#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "cslsl/preprocess.hpp"

namespace cslsl::io {

// "# key=value" header lines carried by every artifact file.
using Header = std::map<std::string, std::string>;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_header(std::ostream& out, std::string_view kind, const Header& header);
Header read_header(std::istream& in, std::string_view kind);

// Vocabulary file, tab-separated, after the header:
//   has_categories <0|1>
//   user     <index> <key>
//   category <index> <source category id> <name>
//   location <index> <key> <lat> <lon> <category index>
void write_vocab(std::ostream& out, const preprocess::Vocab& vocab, const Header& header);
preprocess::Vocab read_vocab(std::istream& in, Header* header = nullptr);

// Processed dataset file, tab-separated, after the header:
//   counts  <|U|> <|L|> <|C|>
//   user    <key> <num sessions> <split point>
//   session <week id> <num records>
//   <canonical record line>   (one per record of the session)
// Record lines use the canonical ingest layout, so calendar features are
// recomputed on load from utc_seconds and tz_offset_minutes.
void write_processed(std::ostream& out, const preprocess::ProcessedDataset& ds, const Header& header);
preprocess::ProcessedDataset read_processed(std::istream& processed, std::istream& vocab,
                                            Header* header = nullptr);

void save_dataset(const std::filesystem::path& dir, const preprocess::ProcessedDataset& ds, const Header& header);
preprocess::ProcessedDataset load_dataset(const std::filesystem::path& dir, Header* header = nullptr);

inline constexpr const char* kProcessedFile = "processed.tsv";
inline constexpr const char* kVocabFile = "vocab.tsv";

}  // namespace cslsl::io
