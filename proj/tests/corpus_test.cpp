#include "d2e2s/corpus.hpp"

#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "testutil.hpp"

using namespace d2e2s;

namespace {

TEST(Corpus, ParseV2LineSingleTriplet) {
  RawExample ex =
      parse_v2_line("The price is reasonable .####[([1], [3], 'POS')]");
  EXPECT_EQ(ex.words,
            (std::vector<std::string>{"The", "price", "is", "reasonable", "."}));
  ASSERT_EQ(ex.triplets.size(), 1u);
  EXPECT_EQ(ex.triplets[0].aspect_indices, std::vector<int>{1});
  EXPECT_EQ(ex.triplets[0].opinion_indices, std::vector<int>{3});
  EXPECT_EQ(ex.triplets[0].polarity, Polarity::POS);
}

TEST(Corpus, ParseV2LineMultiTripletMultiWord) {
  RawExample ex = parse_v2_line(
      "The battery life is short and dull .####"
      "[([1, 2], [4], 'NEG'), ([1, 2], [6], 'NEG')]");
  ASSERT_EQ(ex.triplets.size(), 2u);
  EXPECT_EQ(ex.triplets[0].aspect_indices, (std::vector<int>{1, 2}));
  EXPECT_EQ(ex.triplets[1].opinion_indices, std::vector<int>{6});
  EXPECT_EQ(ex.triplets[1].polarity, Polarity::NEG);
}

TEST(Corpus, ParseV2LineAcceptsDoubleQuotesAndFullWords) {
  RawExample ex =
      parse_v2_line("Nice staff .####[([1], [0], \"positive\")]");
  ASSERT_EQ(ex.triplets.size(), 1u);
  EXPECT_EQ(ex.triplets[0].polarity, Polarity::POS);
  EXPECT_EQ(parse_v2_line("Ok .####[([0], [1], 'Neutral')]")
                .triplets[0]
                .polarity,
            Polarity::NEU);
}

TEST(Corpus, ParseV2LineEmptyTripletList) {
  RawExample ex = parse_v2_line("Nothing here .####[]");
  EXPECT_TRUE(ex.triplets.empty());
  EXPECT_EQ(ex.words.size(), 3u);
}

TEST(Corpus, ParseV2LineErrorPaths) {
  EXPECT_THROW(parse_v2_line("no separator at all"), MalformedLineError);
  EXPECT_THROW(parse_v2_line("a b####[([0], [1], 'POS'"), MalformedLineError);
  EXPECT_THROW(parse_v2_line("a b####[([0], [5], 'POS')]"), MalformedLineError);
  EXPECT_THROW(parse_v2_line("a b####[([0], [1], 'WOW')]"), MalformedLineError);
  EXPECT_THROW(parse_v2_line("a b c####[([0, 2], [1], 'POS')]"),
               MalformedLineError);
  EXPECT_THROW(parse_v2_line("a b####[([], [1], 'POS')]"), MalformedLineError);
  EXPECT_THROW(parse_v2_line("####[([0], [1], 'POS')]"), MalformedLineError);
  EXPECT_THROW(parse_v2_line("a b####[([0], [1], 'POS')] junk"),
               MalformedLineError);
}

TEST(Corpus, RoundTripFixedLine) {
  const std::string line =
      "The price is reasonable .####[([1], [3], 'POS')]";
  EXPECT_EQ(serialize_v2_line(parse_v2_line(line)), line);
}

TEST(Corpus, RoundTripRandomExamples) {
  Rng rng(99);
  std::uniform_int_distribution<int> n_words(2, 12);
  std::uniform_int_distribution<int> n_trip(0, 4);
  std::uniform_int_distribution<int> pol(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    RawExample ex;
    const int n = n_words(rng);
    for (int i = 0; i < n; ++i) {
      ex.words.push_back("w" + std::to_string(i));
      ex.text += (i ? " " : "") + ex.words.back();
    }
    const int t = n_trip(rng);
    std::uniform_int_distribution<int> pos(0, n - 1);
    for (int k = 0; k < t; ++k) {
      RawTriplet tr;
      int a0 = pos(rng), a1 = std::min(n - 1, a0 + pol(rng));
      int o0 = pos(rng), o1 = std::min(n - 1, o0 + pol(rng));
      for (int i = a0; i <= a1; ++i) tr.aspect_indices.push_back(i);
      for (int i = o0; i <= o1; ++i) tr.opinion_indices.push_back(i);
      tr.polarity = static_cast<Polarity>(pol(rng));
      ex.triplets.push_back(std::move(tr));
    }
    EXPECT_EQ(parse_v2_line(serialize_v2_line(ex)), ex);
  }
}

TEST(Corpus, ComputeStatsCountsPolarities) {
  std::vector<RawExample> split;
  split.push_back(parse_v2_line("a b c####[([0], [1], 'POS')]"));
  split.push_back(
      parse_v2_line("a b c####[([0], [1], 'NEG'), ([2], [1], 'NEU')]"));
  split.push_back(parse_v2_line("a b####[]"));
  CorpusStats s = compute_stats(split);
  EXPECT_EQ(s, (CorpusStats{1, 1, 1, 3, 3}));
  EXPECT_EQ(compute_stats({}), (CorpusStats{0, 0, 0, 0, 0}));
}

SidecarRecord star_record() {
  // Word 2 (1-based) is the root; everything hangs off it.
  return {{"a", "b", "c", "d", "e"},
          {2, 0, 2, 2, 2},
          {"det", "root", "dep", "dep", "punct"}};
}

TEST(Corpus, AttachDependenciesBuildsValidSentence) {
  RawExample ex = parse_v2_line("a b c d e####[([1], [3], 'POS')]");
  Sentence s = attach_dependencies(ex, star_record(), 7);
  EXPECT_EQ(s.id, 7);
  EXPECT_EQ(s.word_count(), 5);
  EXPECT_EQ(s.dep_heads, (std::vector<int>{2, 0, 2, 2, 2}));
  ASSERT_EQ(s.gold_triplets.size(), 1u);
  EXPECT_EQ(s.gold_triplets[0], (Triplet{{1, 1}, {3, 3}, Polarity::POS}));
  ASSERT_EQ(s.subtoken_spans.size(), 5u);
  EXPECT_EQ(s.subtoken_spans[3], (std::pair<int, int>{3, 3}));
}

TEST(Corpus, AttachDependenciesErrorPaths) {
  RawExample ex = parse_v2_line("a b c d e####[]");

  SidecarRecord short_rec{{"a", "b", "c", "d"}, {0, 1, 1, 1}, {"r", "d", "d", "d"}};
  EXPECT_THROW(attach_dependencies(ex, short_rec), TokenMismatchError);

  SidecarRecord wrong_word = star_record();
  wrong_word.tokens[2] = "zzz";
  EXPECT_THROW(attach_dependencies(ex, wrong_word), TokenMismatchError);

  SidecarRecord two_cycle = star_record();
  two_cycle.heads = {2, 1, 2, 2, 2};  // words 1 and 2 point at each other
  EXPECT_THROW(attach_dependencies(ex, two_cycle), CyclicHeadsError);

  SidecarRecord two_roots = star_record();
  two_roots.heads = {0, 0, 2, 2, 2};
  EXPECT_THROW(attach_dependencies(ex, two_roots), MultipleRootsError);

  SidecarRecord self_loop = star_record();
  self_loop.heads = {2, 0, 3, 2, 2};  // word 3 is its own head
  EXPECT_THROW(attach_dependencies(ex, self_loop), CyclicHeadsError);

  SidecarRecord no_root = star_record();
  no_root.heads = {2, 3, 4, 5, 1};
  EXPECT_THROW(attach_dependencies(ex, no_root), CyclicHeadsError);

  SidecarRecord out_of_range = star_record();
  out_of_range.heads = {2, 0, 9, 2, 2};
  EXPECT_THROW(attach_dependencies(ex, out_of_range), MalformedLineError);
}

TEST(Corpus, SidecarFileRoundTrip) {
  testutil::TempDir dir;
  std::vector<SidecarRecord> recs = {
      star_record(),
      {{"x", "y"}, {0, 1}, {"root", "dep"}},
  };
  const auto path = dir.path() / "a.dep.jsonl";
  write_sidecar_file(path, recs);
  EXPECT_EQ(read_sidecar_file(path), recs);
}

TEST(Corpus, SidecarRejectsBadRecords) {
  EXPECT_THROW(parse_sidecar_record("not json"), MalformedLineError);
  EXPECT_THROW(parse_sidecar_record(R"({"tokens": ["a"], "heads": [0]})"),
               MalformedLineError);
  EXPECT_THROW(
      parse_sidecar_record(
          R"({"tokens": ["a"], "heads": [0], "labels": ["r"], "extra": 1})"),
      MalformedLineError);
  EXPECT_THROW(
      parse_sidecar_record(R"({"tokens": ["a"], "heads": "x", "labels": ["r"]})"),
      MalformedLineError);
}

TEST(Corpus, ReadV2FilePrefixesErrorsWithLineNumber) {
  testutil::TempDir dir;
  const auto path = dir.write(
      "bad.txt", "a b####[([0], [1], 'POS')]\na b####[([0], [9], 'POS')]\n");
  try {
    read_v2_file(path);
    FAIL() << "expected MalformedLineError";
  } catch (const MalformedLineError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.txt:2:"), std::string::npos);
  }
  EXPECT_THROW(read_v2_file(dir.path() / "missing.txt"), NoDataFoundError);
}

TEST(Corpus, LoadSentencesChecksRecordCount) {
  testutil::TempDir dir;
  const auto v2 = dir.write("s.txt",
                            "a b####[([0], [1], 'POS')]\n"
                            "c d####[([1], [0], 'NEG')]\n");
  write_sidecar_file(dir.path() / "s.dep.jsonl",
                     {{{"a", "b"}, {0, 1}, {"root", "dep"}}});
  EXPECT_THROW(load_sentences(v2, dir.path() / "s.dep.jsonl"), IdMismatchError);

  write_sidecar_file(dir.path() / "s2.dep.jsonl",
                     {{{"a", "b"}, {0, 1}, {"root", "dep"}},
                      {{"c", "d"}, {2, 0}, {"dep", "root"}}});
  std::vector<Sentence> sents = load_sentences(v2, dir.path() / "s2.dep.jsonl");
  ASSERT_EQ(sents.size(), 2u);
  EXPECT_EQ(sents[0].id, 0);
  EXPECT_EQ(sents[1].id, 1);
  EXPECT_EQ(sents[1].gold_triplets[0].polarity, Polarity::NEG);
}

std::vector<Sentence> n_sentences(int n) {
  std::vector<Sentence> out;
  for (int i = 0; i < n; ++i) {
    Sentence s;
    s.id = i;
    const int words = 2 + i % 4;
    for (int w = 0; w < words; ++w) s.words.push_back("w");
    out.push_back(std::move(s));
  }
  return out;
}

TEST(Corpus, MakeBatchesSizesAndDeterminism) {
  std::vector<Sentence> sents = n_sentences(33);
  std::vector<Batch> batches = make_batches(sents, 16, 5);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].sentence_ids.size(), 16u);
  EXPECT_EQ(batches[1].sentence_ids.size(), 16u);
  EXPECT_EQ(batches[2].sentence_ids.size(), 1u);

  std::vector<Batch> again = make_batches(sents, 16, 5);
  for (std::size_t i = 0; i < batches.size(); ++i)
    EXPECT_EQ(batches[i].sentence_ids, again[i].sentence_ids);

  std::vector<Batch> other = make_batches(sents, 16, 6);
  bool any_diff = false;
  for (std::size_t i = 0; i < batches.size() && !any_diff; ++i)
    any_diff = batches[i].sentence_ids != other[i].sentence_ids;
  EXPECT_TRUE(any_diff);

  EXPECT_EQ(make_batches(n_sentences(1), 16, 0).size(), 1u);
  EXPECT_THROW(make_batches(sents, 0, 0), ConfigError);
}

TEST(Corpus, MakeBatchesMasksMatchLengths) {
  std::vector<Sentence> sents = n_sentences(4);  // lengths 2,3,4,5
  std::vector<Batch> batches = make_batches(sents, 4, 1);
  ASSERT_EQ(batches.size(), 1u);
  const Batch& b = batches[0];
  EXPECT_EQ(b.max_words, 5);
  for (std::size_t k = 0; k < b.sentence_ids.size(); ++k) {
    const int len = sents[b.sentence_ids[k]].word_count();
    ASSERT_EQ(b.masks[k].size(), 5u);
    for (int j = 0; j < 5; ++j)
      EXPECT_EQ(b.masks[k][j], j < len ? 1 : 0) << "k=" << k << " j=" << j;
  }
}

}  // namespace
