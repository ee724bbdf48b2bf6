#include "d2e2s/tokenizer.hpp"

#include <gtest/gtest.h>

#include "testutil.hpp"

using namespace d2e2s;

namespace {

Sentence sentence_of(std::vector<std::string> words) {
  Sentence s;
  s.words = std::move(words);
  return s;
}

TEST(Tokenizer, ToyVocabSpecialsAndIds) {
  std::vector<Sentence> sents = {sentence_of({"the", "cat"}),
                                 sentence_of({"cat", "sat"})};
  Vocab v = Vocab::build_toy(sents);
  EXPECT_EQ(v.pad_id(), 0);
  EXPECT_EQ(v.unk_id(), 1);
  EXPECT_EQ(v.cls_id(), 2);
  EXPECT_EQ(v.sep_id(), 3);
  EXPECT_EQ(v.size(), 7);  // 4 specials + cat, sat, the
  EXPECT_EQ(v.id("zebra"), v.unk_id());
}

TEST(Tokenizer, ToyTokenizationWrapsAndAlignsOneToOne) {
  std::vector<Sentence> sents = {sentence_of({"a", "b", "c"})};
  Vocab v = Vocab::build_toy(sents);
  Tokenized t = tokenize_words(v, {"a", "c", "zzz"}, TokenizerKind::Toy);
  ASSERT_EQ(t.ids.size(), 5u);
  EXPECT_EQ(t.ids.front(), v.cls_id());
  EXPECT_EQ(t.ids.back(), v.sep_id());
  EXPECT_EQ(t.ids[3], v.unk_id());
  ASSERT_EQ(t.word_spans.size(), 3u);
  for (int w = 0; w < 3; ++w)
    EXPECT_EQ(t.word_spans[w], (std::pair<int, int>{w + 1, w + 1}));
}

Vocab wordpiece_vocab() {
  return Vocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "un", "unaff", "##aff",
                "##able", "able", "runs", "."});
}

TEST(Tokenizer, WordPieceGreedyLongestMatchFirst) {
  Vocab v = wordpiece_vocab();
  // "unaff" beats "un" because longer prefixes are tried first.
  Tokenized t = tokenize_words(v, {"unaffable"}, TokenizerKind::WordPiece);
  std::vector<int> expect = {v.cls_id(), v.id("unaff"), v.id("##able"),
                             v.sep_id()};
  EXPECT_EQ(t.ids, expect);
  ASSERT_EQ(t.word_spans.size(), 1u);
  EXPECT_EQ(t.word_spans[0], (std::pair<int, int>{1, 2}));
}

TEST(Tokenizer, WordPieceUnmatchableWordBecomesUnk) {
  Vocab v = wordpiece_vocab();
  // "xyz" has no pieces; "ablexyz" starts fine but dead-ends, so the whole
  // word collapses to [UNK].
  Tokenized t =
      tokenize_words(v, {"xyz", "ablexyz"}, TokenizerKind::WordPiece);
  std::vector<int> expect = {v.cls_id(), v.unk_id(), v.unk_id(), v.sep_id()};
  EXPECT_EQ(t.ids, expect);
}

TEST(Tokenizer, WordPieceLowercasesByDefault) {
  Vocab v = wordpiece_vocab();
  Tokenized lower =
      tokenize_words(v, {"Runs", "."}, TokenizerKind::WordPiece);
  EXPECT_EQ(lower.ids[1], v.id("runs"));
  EXPECT_EQ(lower.ids[2], v.id("."));
  Tokenized cased = tokenize_words(v, {"Runs"}, TokenizerKind::WordPiece,
                                   /*lowercase=*/false);
  EXPECT_EQ(cased.ids[1], v.unk_id());
}

TEST(Tokenizer, VocabRequiresSpecialTokens) {
  EXPECT_THROW(Vocab({"just", "words"}), ConfigError);
}

TEST(Tokenizer, LoadWordpieceAssignsLineNumberIds) {
  testutil::TempDir dir;
  const auto path = dir.write(
      "vocab.txt", "[PAD]\n[UNK]\n[CLS]\n[SEP]\nhello\n##world\n");
  Vocab v = Vocab::load_wordpiece(path);
  EXPECT_EQ(v.size(), 6);
  EXPECT_EQ(v.id("hello"), 4);
  EXPECT_EQ(v.id("##world"), 5);
  EXPECT_THROW(Vocab::load_wordpiece(dir.path() / "nope.txt"),
               NoDataFoundError);
}

}  // namespace
