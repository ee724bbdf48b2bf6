#pragma once

// Tokenization for the two backbone flavors: a word-level vocabulary for the
// toy backbone and greedy longest-match WordPiece for pretrained weights.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "d2e2s/common.hpp"
#include "d2e2s/corpus.hpp"

namespace d2e2s {

class Vocab {
 public:
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";

  // Builds a word-level vocabulary from sentences: specials first, then the
  // sorted set of distinct words.
  static Vocab build_toy(const std::vector<Sentence>& sentences) {
    std::set<std::string> words;
    for (const Sentence& s : sentences)
      for (const std::string& w : s.words) words.insert(w);
    std::vector<std::string> tokens = {kPad, kUnk, kCls, kSep};
    tokens.insert(tokens.end(), words.begin(), words.end());
    return Vocab(std::move(tokens));
  }

  // Loads a WordPiece vocabulary file: one token per line, id = line index.
  static Vocab load_wordpiece(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NoDataFoundError("cannot open vocab " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocab(std::move(tokens));
  }

  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      map_.emplace(tokens_[i], static_cast<int>(i));
    for (const char* sp : {kPad, kUnk, kCls, kSep})
      if (map_.count(sp) == 0)
        throw ConfigError(std::string("vocabulary lacks special token ") + sp);
  }

  int id(const std::string& token) const {
    auto it = map_.find(token);
    return it == map_.end() ? unk_id() : it->second;
  }

  bool contains(const std::string& token) const {
    return map_.count(token) != 0;
  }

  int pad_id() const { return map_.at(kPad); }
  int unk_id() const { return map_.at(kUnk); }
  int cls_id() const { return map_.at(kCls); }
  int sep_id() const { return map_.at(kSep); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> map_;
};

// Subtoken ids for one sentence, wrapped in [CLS] ... [SEP], plus the
// inclusive [first, last] id range for each source word.
struct Tokenized {
  std::vector<int> ids;
  std::vector<std::pair<int, int>> word_spans;
};

namespace detail {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Greedy longest-match-first WordPiece split of one word; any unmatched
// remainder collapses the whole word to [UNK].
inline std::vector<int> wordpiece_word(const Vocab& v, const std::string& word) {
  constexpr std::size_t kMaxChars = 100;
  if (word.size() > kMaxChars) return {v.unk_id()};
  std::vector<int> out;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    int found = -1;
    while (end > start) {
      std::string piece = word.substr(start, end - start);
      if (start > 0) piece = "##" + piece;
      if (v.contains(piece)) {
        found = v.id(piece);
        break;
      }
      --end;
    }
    if (found < 0) return {v.unk_id()};
    out.push_back(found);
    start = end;
  }
  return out;
}

}  // namespace detail

enum class TokenizerKind { Toy, WordPiece };

inline Tokenized tokenize_words(const Vocab& vocab,
                                const std::vector<std::string>& words,
                                TokenizerKind kind, bool lowercase = true) {
  Tokenized t;
  t.ids.push_back(vocab.cls_id());
  for (const std::string& raw : words) {
    std::vector<int> piece_ids;
    if (kind == TokenizerKind::Toy) {
      piece_ids.push_back(vocab.id(raw));
    } else {
      piece_ids =
          detail::wordpiece_word(vocab, lowercase ? detail::lowercase(raw) : raw);
    }
    const int first = static_cast<int>(t.ids.size());
    for (int id : piece_ids) t.ids.push_back(id);
    t.word_spans.emplace_back(first, static_cast<int>(t.ids.size()) - 1);
  }
  t.ids.push_back(vocab.sep_id());
  return t;
}

inline Tokenized tokenize_sentence(const Vocab& vocab, const Sentence& s,
                                   TokenizerKind kind, bool lowercase = true) {
  return tokenize_words(vocab, s.words, kind, lowercase);
}

}  // namespace d2e2s
