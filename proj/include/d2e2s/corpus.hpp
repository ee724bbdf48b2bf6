#pragma once

// Corpus handling: the `sentence####[triplet literal]` wire format, dependency
// sidecars (JSON lines), split statistics, and deterministic batching.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2e2s/common.hpp"

namespace d2e2s {

// ---------------------------------------------------------------------------
// Domain types.

enum class Polarity { POS, NEU, NEG };

inline const char* to_string(Polarity p) {
  switch (p) {
    case Polarity::POS: return "POS";
    case Polarity::NEU: return "NEU";
    case Polarity::NEG: return "NEG";
  }
  return "?";
}

inline Polarity parse_polarity(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (s == "POS" || s == "POSITIVE") return Polarity::POS;
  if (s == "NEU" || s == "NEUTRAL") return Polarity::NEU;
  if (s == "NEG" || s == "NEGATIVE") return Polarity::NEG;
  throw MalformedLineError("unknown polarity string: " + s);
}

// Inclusive word-index span [start, end].
struct Span {
  int start = 0;
  int end = 0;
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
  int width() const { return end - start + 1; }
};

struct Triplet {
  Span aspect;
  Span opinion;
  Polarity polarity = Polarity::NEU;
  friend bool operator==(const Triplet&, const Triplet&) = default;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

// A triplet as it appears on disk: explicit word-index lists.
struct RawTriplet {
  std::vector<int> aspect_indices;
  std::vector<int> opinion_indices;
  Polarity polarity = Polarity::NEU;
  friend bool operator==(const RawTriplet&, const RawTriplet&) = default;
};

struct RawExample {
  std::string text;                 // original sentence, whitespace-tokenized
  std::vector<std::string> words;   // text split on whitespace
  std::vector<RawTriplet> triplets;
  friend bool operator==(const RawExample&, const RawExample&) = default;
};

// One record of the dependency sidecar.
struct SidecarRecord {
  std::vector<std::string> tokens;
  std::vector<int> heads;  // 0 = root, otherwise 1-based head word index
  std::vector<std::string> labels;
  friend bool operator==(const SidecarRecord&, const SidecarRecord&) = default;
};

// Model-ready sentence: words plus a validated dependency tree and gold spans.
struct Sentence {
  int id = 0;
  std::vector<std::string> words;
  // Per-word [first, last] subtoken index into the backbone input; filled by
  // the tokenizer, identity until then.
  std::vector<std::pair<int, int>> subtoken_spans;
  std::vector<int> dep_heads;
  std::vector<std::string> dep_labels;
  std::vector<Triplet> gold_triplets;

  int word_count() const { return static_cast<int>(words.size()); }
};

struct CorpusStats {
  int neu = 0;
  int pos = 0;
  int neg = 0;
  int sentences = 0;
  int triplets = 0;
  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

// A batch is a list of sentence indices into the owning split plus padding
// masks up to the longest member.
struct Batch {
  std::vector<int> sentence_ids;
  int max_words = 0;
  std::vector<std::vector<char>> masks;  // per sentence, length max_words
};

// ---------------------------------------------------------------------------
// Wire-format parsing.

namespace detail {

// Minimal parser for the python-style triplet literal:
// a list of (int-list, int-list, quoted-string) tuples.
class TripletLiteralParser {
 public:
  explicit TripletLiteralParser(std::string s) : s_(std::move(s)) {}

  std::vector<RawTriplet> parse() {
    std::vector<RawTriplet> out;
    expect('[');
    skip_ws();
    if (eat(']')) {
      finish();
      return out;
    }
    while (true) {
      out.push_back(parse_triplet());
      skip_ws();
      if (eat(']')) break;
      expect(',');
    }
    finish();
    return out;
  }

 private:
  void finish() {
    skip_ws();
    if (i_ != s_.size())
      throw MalformedLineError("trailing characters after triplet list");
  }

  void skip_ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_])))
      ++i_;
  }

  bool eat(char c) {
    skip_ws();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!eat(c))
      throw MalformedLineError(std::string("expected '") + c +
                               "' in triplet literal");
  }

  RawTriplet parse_triplet() {
    RawTriplet t;
    expect('(');
    t.aspect_indices = parse_int_list();
    expect(',');
    t.opinion_indices = parse_int_list();
    expect(',');
    t.polarity = parse_polarity(parse_quoted());
    expect(')');
    return t;
  }

  std::vector<int> parse_int_list() {
    std::vector<int> out;
    expect('[');
    skip_ws();
    if (eat(']')) return out;
    while (true) {
      out.push_back(parse_int());
      if (eat(']')) break;
      expect(',');
    }
    return out;
  }

  int parse_int() {
    skip_ws();
    std::size_t start = i_;
    if (i_ < s_.size() && (s_[i_] == '-' || s_[i_] == '+')) ++i_;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_])))
      ++i_;
    if (i_ == start)
      throw MalformedLineError("expected integer in triplet literal");
    return std::stoi(s_.substr(start, i_ - start));
  }

  std::string parse_quoted() {
    skip_ws();
    if (i_ >= s_.size() || (s_[i_] != '\'' && s_[i_] != '"'))
      throw MalformedLineError("expected quoted string in triplet literal");
    const char quote = s_[i_++];
    std::string out;
    while (i_ < s_.size() && s_[i_] != quote) out.push_back(s_[i_++]);
    if (i_ >= s_.size())
      throw MalformedLineError("unterminated string in triplet literal");
    ++i_;  // closing quote
    return out;
  }

  std::string s_;
  std::size_t i_ = 0;
};

inline void check_index_run(const std::vector<int>& idx, int n_words,
                            const char* what) {
  if (idx.empty())
    throw MalformedLineError(std::string(what) + " index list is empty");
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= n_words)
      throw MalformedLineError(std::string(what) + " index " +
                               std::to_string(idx[k]) + " out of range for " +
                               std::to_string(n_words) + " words");
    if (k > 0 && idx[k] != idx[k - 1] + 1)
      throw MalformedLineError(std::string(what) +
                               " indices are not a contiguous ascending run");
  }
}

}  // namespace detail

inline std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(std::move(w));
  return words;
}

inline RawExample parse_v2_line(const std::string& line) {
  const std::size_t sep = line.find("####");
  if (sep == std::string::npos)
    throw MalformedLineError("missing '####' separator");
  RawExample ex;
  ex.text = line.substr(0, sep);
  ex.words = split_whitespace(ex.text);
  if (ex.words.empty()) throw MalformedLineError("empty sentence");
  detail::TripletLiteralParser parser(line.substr(sep + 4));
  ex.triplets = parser.parse();
  const int n = static_cast<int>(ex.words.size());
  for (const RawTriplet& t : ex.triplets) {
    detail::check_index_run(t.aspect_indices, n, "aspect");
    detail::check_index_run(t.opinion_indices, n, "opinion");
  }
  return ex;
}

inline std::string serialize_v2_line(const RawExample& ex) {
  std::ostringstream out;
  out << ex.text << "####[";
  for (std::size_t i = 0; i < ex.triplets.size(); ++i) {
    const RawTriplet& t = ex.triplets[i];
    if (i > 0) out << ", ";
    out << "([";
    for (std::size_t k = 0; k < t.aspect_indices.size(); ++k)
      out << (k ? ", " : "") << t.aspect_indices[k];
    out << "], [";
    for (std::size_t k = 0; k < t.opinion_indices.size(); ++k)
      out << (k ? ", " : "") << t.opinion_indices[k];
    out << "], '" << to_string(t.polarity) << "')";
  }
  out << "]";
  return out.str();
}

inline std::vector<RawExample> read_v2_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NoDataFoundError("cannot open " + path.string());
  std::vector<RawExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(parse_v2_line(line));
    } catch (const MalformedLineError& e) {
      throw MalformedLineError(path.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics.

inline CorpusStats compute_stats(const std::vector<RawExample>& split) {
  CorpusStats s;
  s.sentences = static_cast<int>(split.size());
  for (const RawExample& ex : split) {
    for (const RawTriplet& t : ex.triplets) {
      switch (t.polarity) {
        case Polarity::POS: ++s.pos; break;
        case Polarity::NEU: ++s.neu; break;
        case Polarity::NEG: ++s.neg; break;
      }
      ++s.triplets;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dependency sidecar I/O.

inline SidecarRecord parse_sidecar_record(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedLineError(std::string("bad sidecar JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("tokens") || !j.contains("heads") ||
      !j.contains("labels"))
    throw MalformedLineError(
        "sidecar record must have exactly the fields tokens/heads/labels");
  for (const auto& [key, value] : j.items())
    if (key != "tokens" && key != "heads" && key != "labels")
      throw MalformedLineError("unexpected sidecar field: " + key);
  SidecarRecord rec;
  try {
    rec.tokens = j.at("tokens").get<std::vector<std::string>>();
    rec.heads = j.at("heads").get<std::vector<int>>();
    rec.labels = j.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedLineError(std::string("bad sidecar field type: ") +
                             e.what());
  }
  return rec;
}

inline std::vector<SidecarRecord> read_sidecar_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NoDataFoundError("cannot open " + path.string());
  std::vector<SidecarRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(parse_sidecar_record(line));
    } catch (const MalformedLineError& e) {
      throw MalformedLineError(path.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  return out;
}

inline void write_sidecar_file(const std::filesystem::path& path,
                               const std::vector<SidecarRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const SidecarRecord& rec : records) {
    nlohmann::json j;
    j["tokens"] = rec.tokens;
    j["heads"] = rec.heads;
    j["labels"] = rec.labels;
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Dependency validation and Sentence assembly.

// Throws unless heads (0 = root, else 1-based) encode a single-rooted tree.
inline void validate_heads(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (heads[i] < 0 || heads[i] > n)
      throw MalformedLineError("head index " + std::to_string(heads[i]) +
                               " out of range for " + std::to_string(n) +
                               " tokens");
    if (heads[i] == 0) ++roots;
  }
  if (roots > 1)
    throw MultipleRootsError("found " + std::to_string(roots) +
                             " root tokens, expected exactly 1");
  // Chase parent pointers; a chain that revisits an in-progress node (or any
  // configuration with zero roots) contains a cycle.
  std::vector<int> color(static_cast<std::size_t>(n), 0);  // 0 new, 1 open, 2 done
  for (int start = 0; start < n; ++start) {
    int i = start;
    std::vector<int> path;
    while (i != -1 && color[i] == 0) {
      color[i] = 1;
      path.push_back(i);
      i = heads[i] - 1;  // -1 once we step past the root
    }
    if (i != -1 && color[i] == 1)
      throw CyclicHeadsError("dependency heads contain a cycle through token " +
                             std::to_string(i + 1));
    for (int p : path) color[p] = 2;
  }
  if (roots == 0 && n > 0)
    throw CyclicHeadsError("no root token present");
}

inline Triplet to_triplet(const RawTriplet& raw) {
  return Triplet{{raw.aspect_indices.front(), raw.aspect_indices.back()},
                 {raw.opinion_indices.front(), raw.opinion_indices.back()},
                 raw.polarity};
}

inline Sentence attach_dependencies(const RawExample& ex,
                                    const SidecarRecord& rec, int id = 0) {
  if (rec.tokens.size() != ex.words.size())
    throw TokenMismatchError("sidecar has " + std::to_string(rec.tokens.size()) +
                             " tokens but sentence has " +
                             std::to_string(ex.words.size()) + " words");
  for (std::size_t i = 0; i < ex.words.size(); ++i)
    if (rec.tokens[i] != ex.words[i])
      throw TokenMismatchError("token " + std::to_string(i) + " differs: '" +
                               rec.tokens[i] + "' vs '" + ex.words[i] + "'");
  if (rec.heads.size() != ex.words.size() ||
      rec.labels.size() != ex.words.size())
    throw TokenMismatchError("sidecar heads/labels length differs from tokens");
  validate_heads(rec.heads);

  Sentence s;
  s.id = id;
  s.words = ex.words;
  s.subtoken_spans.reserve(s.words.size());
  for (int i = 0; i < static_cast<int>(s.words.size()); ++i)
    s.subtoken_spans.emplace_back(i, i);
  s.dep_heads = rec.heads;
  s.dep_labels = rec.labels;
  s.gold_triplets.reserve(ex.triplets.size());
  for (const RawTriplet& t : ex.triplets) s.gold_triplets.push_back(to_triplet(t));
  return s;
}

// Pairs a V2 file with its sidecar, validating record counts line up.
inline std::vector<Sentence> load_sentences(
    const std::filesystem::path& v2_path,
    const std::filesystem::path& sidecar_path) {
  const std::vector<RawExample> examples = read_v2_file(v2_path);
  const std::vector<SidecarRecord> records = read_sidecar_file(sidecar_path);
  if (examples.size() != records.size())
    throw IdMismatchError(v2_path.string() + " has " +
                          std::to_string(examples.size()) + " sentences but " +
                          sidecar_path.string() + " has " +
                          std::to_string(records.size()) + " records");
  std::vector<Sentence> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i)
    out.push_back(
        attach_dependencies(examples[i], records[i], static_cast<int>(i)));
  return out;
}

// ---------------------------------------------------------------------------
// Batching.

inline std::vector<Batch> make_batches(const std::vector<Sentence>& sentences,
                                       int size, std::uint64_t seed) {
  if (size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<int> order(sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<int>(i);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t at = 0; at < order.size(); at += size) {
    Batch b;
    const std::size_t stop =
        std::min(order.size(), at + static_cast<std::size_t>(size));
    for (std::size_t k = at; k < stop; ++k) {
      b.sentence_ids.push_back(order[k]);
      b.max_words = std::max(b.max_words, sentences[order[k]].word_count());
    }
    for (int id : b.sentence_ids) {
      std::vector<char> mask(static_cast<std::size_t>(b.max_words), 0);
      for (int j = 0; j < sentences[id].word_count(); ++j) mask[j] = 1;
      b.masks.push_back(std::move(mask));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace d2e2s
