// Acceptance suite: seven binding-or-skip checks, each printing exactly one
// verdict line of the form
//
//   [CRITERION n] PASS|FAIL|SKIP — <what was checked>
//
// Criteria 1-6 are binding for this artifact; criterion 7 (full-scale
// reproduction on the public corpora) needs GPU-scale training and is
// reported as a skip. Criterion 1 runs against the real corpora when a data
// directory is available (see the README) and otherwise verifies the
// statistics machinery on the bundled fixture corpus.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "d2e2s/corpus.hpp"
#include "d2e2s/evaluation.hpp"
#include "d2e2s/graphs.hpp"
#include "d2e2s/hfim.hpp"
#include "d2e2s/model.hpp"
#include "d2e2s/separation.hpp"
#include "d2e2s/spans.hpp"
#include "d2e2s/tokenizer.hpp"
#include "d2e2s/training.hpp"
#include "testutil.hpp"

namespace ag = d2e2s::ag;
namespace fs = std::filesystem;
using ag::Mat;
using ag::Var;
using d2e2s::Polarity;
using d2e2s::Rng;
using d2e2s::Span;
using d2e2s::Triplet;

namespace {

const fs::path kFixtureDir = fs::path(D2E2S_FIXTURE_DIR) / "toy";

// ---------------------------------------------------------------------------
// Independent plain-Eigen oracles, re-stated here so that the acceptance
// binary certifies the layers without relying on the unit-test sources.

Mat sadpool_oracle(const Mat& h, const Mat& a) {
  Mat out = h;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    const double scale = 1.0 + a.row(i).mean() + a.row(i).maxCoeff();
    out.row(i) = (h.row(i) * scale).cwiseMax(0.0);
  }
  return out;
}

Mat gcn_oracle(const Mat& a, const Mat& h, const Mat& w) {
  const Eigen::Index n = a.rows();
  Mat a_hat = a + Mat::Identity(n, n);
  Eigen::VectorXd dinv = a_hat.rowwise().sum().array().pow(-0.5);
  return dinv.asDiagonal() * a_hat * dinv.asDiagonal() * h * w;
}

Mat gru_oracle(const Mat& x, const Mat& h, const Mat& w_ih, const Mat& w_hh,
               const Mat& b_ih, const Mat& b_hh) {
  const Eigen::Index hd = h.cols();
  Mat gi = (x * w_ih).rowwise() + b_ih.row(0);
  Mat gh = (h * w_hh).rowwise() + b_hh.row(0);
  auto seg = [hd](const Mat& m, int k) {
    return m.middleCols(k * hd, hd).eval();
  };
  Mat r = (1.0 / (1.0 + (-(seg(gi, 0) + seg(gh, 0)).array()).exp())).matrix();
  Mat z = (1.0 / (1.0 + (-(seg(gi, 1) + seg(gh, 1)).array()).exp())).matrix();
  Mat n = (seg(gi, 2) + r.cwiseProduct(seg(gh, 2))).array().tanh().matrix();
  return (Mat::Ones(h.rows(), hd) - z).cwiseProduct(n) + z.cwiseProduct(h);
}

// Maximum bipartite matching between predictions and gold by augmenting
// paths, with duplicate predictions collapsed first.
long bipartite_matches(std::vector<Triplet> predicted,
                       const std::vector<Triplet>& gold) {
  std::sort(predicted.begin(), predicted.end());
  predicted.erase(std::unique(predicted.begin(), predicted.end()),
                  predicted.end());
  std::vector<int> owner(gold.size(), -1);
  std::function<bool(std::size_t, std::vector<bool>&)> augment =
      [&](std::size_t p, std::vector<bool>& visited) {
        for (std::size_t g = 0; g < gold.size(); ++g) {
          if (visited[g] || !(predicted[p] == gold[g])) continue;
          visited[g] = true;
          if (owner[g] < 0 ||
              augment(static_cast<std::size_t>(owner[g]), visited)) {
            owner[g] = static_cast<int>(p);
            return true;
          }
        }
        return false;
      };
  long matched = 0;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    std::vector<bool> visited(gold.size(), false);
    if (augment(p, visited)) ++matched;
  }
  return matched;
}

// ---------------------------------------------------------------------------
// Corpus access.

fs::path find_split_file(const fs::path& dir, const std::string& split) {
  for (const std::string& name : {split + ".txt", split + "_triplets.txt"}) {
    const fs::path p = dir / name;
    if (fs::exists(p)) return p;
  }
  return {};
}

std::vector<d2e2s::Sentence> load_fixture_split(const std::string& split) {
  return d2e2s::load_sentences(kFixtureDir / (split + ".txt"),
                               kFixtureDir / (split + ".sidecar.jsonl"));
}

struct SplitStats {
  int neu, pos, neg, sentences, triplets;
};

// Published statistics of the four public corpora, one row per split.
const std::map<std::string, std::map<std::string, SplitStats>> kReference = {
    {"14lap",
     {{"train", {126, 817, 517, 906, 1460}},
      {"dev", {36, 169, 141, 219, 346}},
      {"test", {63, 364, 116, 328, 543}}}},
    {"14res",
     {{"train", {166, 1692, 480, 1266, 2338}},
      {"dev", {54, 404, 119, 310, 577}},
      {"test", {66, 773, 155, 492, 994}}}},
    {"15res",
     {{"train", {25, 783, 205, 605, 1013}},
      {"dev", {11, 185, 53, 148, 249}},
      {"test", {25, 317, 143, 322, 485}}}},
    {"16res",
     {{"train", {50, 1015, 329, 857, 1394}},
      {"dev", {11, 252, 76, 210, 339}},
      {"test", {29, 407, 78, 326, 514}}}}};

// Directory holding the four corpora: $D2E2S_DATA_DIR, or data/aste-v2 at
// the repository root. Empty path if neither holds all four datasets.
fs::path locate_real_data() {
  std::vector<fs::path> candidates;
  if (const char* env = std::getenv("D2E2S_DATA_DIR")) candidates.push_back(env);
  candidates.push_back(fs::path(D2E2S_FIXTURE_DIR) / ".." / ".." / "data" /
                       "aste-v2");
  for (const fs::path& root : candidates) {
    bool all = true;
    for (const auto& [dataset, splits] : kReference) {
      std::string upper = dataset;
      for (char& c : upper) c = static_cast<char>(std::toupper(c));
      if (find_split_file(root / dataset, "train").empty() &&
          find_split_file(root / upper, "train").empty())
        all = false;
    }
    if (all) return root;
  }
  return {};
}

fs::path dataset_dir(const fs::path& root, const std::string& dataset) {
  std::string upper = dataset;
  for (char& c : upper) c = static_cast<char>(std::toupper(c));
  if (!find_split_file(root / dataset, "train").empty()) return root / dataset;
  return root / upper;
}

// ---------------------------------------------------------------------------
// Fixture: each test sets its criterion number and description up front, so
// the verdict line prints even when an assertion aborts the body.

class Acceptance : public ::testing::Test {
 protected:
  void describe(int number, std::string summary) {
    number_ = number;
    summary_ = std::move(summary);
  }

  void mark_skipped(std::string reason) {
    skipped_ = true;
    skip_reason_ = std::move(reason);
  }

  void TearDown() override {
    const char* verdict = skipped_ ? "SKIP" : (HasFailure() ? "FAIL" : "PASS");
    std::cout << "[CRITERION " << number_ << "] " << verdict << " — "
              << summary_;
    if (skipped_) std::cout << " (" << skip_reason_ << ")";
    std::cout << std::endl;
  }

 private:
  int number_ = 0;
  std::string summary_;
  bool skipped_ = false;
  std::string skip_reason_;
};

d2e2s::ModelConfig tiny_model_config(const std::string& ablation) {
  d2e2s::ModelConfig cfg;
  cfg.encoder.hidden_bert = 8;
  cfg.encoder.hidden_lstm_half = 3;
  cfg.encoder.dropout = 0.0;
  cfg.encoder.backbone_dropout = 0.0;
  cfg.encoder.self_attention_heads = 2;
  cfg.encoder.backbone_layers = 1;
  cfg.encoder.backbone_heads = 2;
  cfg.encoder.max_positions = 24;
  cfg.sem_attention_heads = 2;
  cfg.syn_sem_gcn_layers = 1;
  cfg.fuse_out = 6;
  cfg.span_width_dim = 2;
  cfg.span_hidden = 5;
  cfg.pair_width_dim = 2;
  cfg.pair_hidden = 5;
  cfg.ablation = ablation;
  return cfg;
}

// The exact module-call sequence each ablation must produce.
std::vector<std::string> expected_trace(const std::string& name) {
  std::vector<std::string> t;
  if (name == "e1_only")
    t.push_back("encoder[e1_only]");
  else if (name == "e2_only")
    t.push_back("encoder[e2_only]");
  else
    t.push_back("encoder[both]");
  t.push_back("sem_attention");
  if (name != "wo_ss") t.push_back("separation");
  if (name != "wo_hfim") {
    if (name != "wo_ss") {  // channel stacks are tied to the separation term
      if (name != "wo_syn") t.push_back("hfim.channel_gcn[syn]");
      if (name != "wo_sem") t.push_back("hfim.channel_gcn[sem]");
    }
    if (name == "biaffine") {
      t.push_back("hfim.biaffine");
    } else {
      if (name != "wo_syn") t.push_back("hfim.syn_branch");
      if (name != "wo_sem") t.push_back("hfim.sem_branch");
    }
  }
  t.insert(t.end(), {"fuse", "spans", "triplets"});
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Criterion 1 — corpus statistics.

TEST_F(Acceptance, Criterion1CorpusStatistics) {
  const fs::path root = locate_real_data();
  if (!root.empty()) {
    describe(1, "corpus statistics match the reference table exactly for all "
                "four datasets (" + root.string() + ")");
    for (const auto& [dataset, splits] : kReference) {
      const fs::path dir = dataset_dir(root, dataset);
      for (const auto& [split, want] : splits) {
        const fs::path file = find_split_file(dir, split);
        ASSERT_FALSE(file.empty()) << dataset << "/" << split << " missing";
        const d2e2s::CorpusStats got =
            d2e2s::compute_stats(d2e2s::read_v2_file(file));
        EXPECT_EQ(got.neu, want.neu) << dataset << "/" << split;
        EXPECT_EQ(got.pos, want.pos) << dataset << "/" << split;
        EXPECT_EQ(got.neg, want.neg) << dataset << "/" << split;
        EXPECT_EQ(got.sentences, want.sentences) << dataset << "/" << split;
        EXPECT_EQ(got.triplets, want.triplets) << dataset << "/" << split;
      }
    }
    return;
  }

  describe(1, "corpus statistics");
  const std::map<std::string, SplitStats> fixture = {
      {"train", {2, 7, 5, 10, 14}},
      {"dev", {0, 2, 3, 4, 5}},
      {"test", {1, 1, 2, 4, 4}}};
  for (const auto& [split, want] : fixture) {
    const d2e2s::CorpusStats got = d2e2s::compute_stats(
        d2e2s::read_v2_file(kFixtureDir / (split + ".txt")));
    EXPECT_EQ(got.neu, want.neu) << split;
    EXPECT_EQ(got.pos, want.pos) << split;
    EXPECT_EQ(got.neg, want.neg) << split;
    EXPECT_EQ(got.sentences, want.sentences) << split;
    EXPECT_EQ(got.triplets, want.triplets) << split;
    EXPECT_EQ(got.neu + got.pos + got.neg, got.triplets) << split;
  }
  mark_skipped(
      "the four public corpora are not bundled; statistics machinery "
      "verified on the fixture corpus — set D2E2S_DATA_DIR to run the full "
      "check");
  GTEST_SKIP();
}

// ---------------------------------------------------------------------------
// Criterion 2 — graph-layer oracles.

TEST_F(Acceptance, Criterion2LayerOracles) {
  describe(2, "graph layers match independent dense oracles "
              "(gcn 1e-6 on 100 random graphs, gated conv exact when "
              "isolated / 1e-6 with edges, pooling 1e-7)");

  // Normalized graph convolution vs. the dense closed form.
  {
    Rng rng(7);
    std::uniform_int_distribution<int> size_dist(1, 6);
    std::bernoulli_distribution edge_dist(0.4);
    for (int t = 0; t < 100; ++t) {
      const Eigen::Index n = size_dist(rng);
      Mat a = Mat::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          if (i != j && edge_dist(rng)) a(i, j) = 1.0;
      if (t % 2 == 0) a = ((a + a.transpose()).array() > 0).cast<double>();
      Mat h = testutil::random_mat(n, 4, rng);
      d2e2s::nn::ParamRegistry reg;
      d2e2s::GcnConv conv(reg, "c", 4, 3, rng);
      Var out = conv.forward(
          ag::constant(d2e2s::normalize_adjacency_dense(a)), ag::constant(h));
      Mat oracle = gcn_oracle(a, h, reg.find("c.weight")->value());
      ASSERT_LT((out.value() - oracle).cwiseAbs().maxCoeff(), 1e-6)
          << "graph " << t;
    }
  }

  // Gated graph convolution: isolated nodes step through the cell bit-exactly.
  {
    d2e2s::nn::ParamRegistry reg;
    Rng rng(9);
    d2e2s::GatedGraphConv gated(reg, "g", 3, 1, rng);
    Mat h = testutil::random_mat(2, 3, rng);
    d2e2s::SparseGraph empty;
    empty.weights = ag::constant(Mat::Zero(2, 2));
    Var out = gated.forward(ag::constant(h), empty);
    Var cell = gated.cell().forward(ag::constant(Mat::Zero(2, 3)),
                                    ag::constant(h));
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j)
        ASSERT_EQ(out.value()(i, j), cell.value()(i, j));
    Mat direct =
        gru_oracle(Mat::Zero(2, 3), h, reg.find("g.gru.w_ih")->value(),
                   reg.find("g.gru.w_hh")->value(),
                   reg.find("g.gru.b_ih")->value(),
                   reg.find("g.gru.b_hh")->value());
    ASSERT_LT((out.value() - direct).cwiseAbs().maxCoeff(), 1e-14);
  }

  // Gated graph convolution with weighted edges vs. the dense replica.
  {
    Rng rng(12);
    for (int layers : {1, 2}) {
      d2e2s::nn::ParamRegistry reg;
      d2e2s::GatedGraphConv gated(reg, "g", 4, layers, rng);
      Mat h = testutil::random_mat(4, 4, rng);
      Mat w = testutil::random_mat(4, 4, rng, -0.5, 0.5);
      w(0, 2) = w(3, 1) = 0.0;
      d2e2s::SparseGraph g;
      g.weights = ag::constant(w);
      Mat got = gated.forward(ag::constant(h), g).value();
      Mat theta = reg.find("g.theta.weight")->value();
      Mat x = h;
      for (int l = 0; l < layers; ++l)
        x = gru_oracle(w.transpose() * (x * theta), x,
                       reg.find("g.gru.w_ih")->value(),
                       reg.find("g.gru.w_hh")->value(),
                       reg.find("g.gru.b_ih")->value(),
                       reg.find("g.gru.b_hh")->value());
      ASSERT_LT((got - x).cwiseAbs().maxCoeff(), 1e-6) << layers << " layers";
    }
  }

  // Self-attention pooling vs. the hand formula ReLU(H ⊙ (1 + mean + max)).
  {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
      const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 6);
      Mat h = testutil::random_mat(n, 4, rng, -2.0, 2.0);
      Mat a = testutil::random_mat(n, n, rng, 0.05, 1.0);
      for (Eigen::Index i = 0; i < n; ++i) a.row(i) /= a.row(i).sum();
      Var out = d2e2s::sadpool(ag::constant(h), ag::constant(a));
      ASSERT_LT((out.value() - sadpool_oracle(h, a)).cwiseAbs().maxCoeff(),
                1e-7)
          << "trial " << t;
    }
  }
}

// ---------------------------------------------------------------------------
// Criterion 3 — separation-loss analytics.

TEST_F(Acceptance, Criterion3SeparationAnalytics) {
  describe(3, "separation loss analytics: hand-computed row divergence, "
              "monotonicity over 100 trials, gradient vs finite differences "
              "below 1e-4");

  auto row2 = [](double a, double b) {
    Mat m(1, 2);
    m << a, b;
    return Var(m, false);
  };
  auto sym_kl = [](const Var& p, const Var& q) {
    return d2e2s::row_kl(p, q).scalar() + d2e2s::row_kl(q, p).scalar();
  };

  // softmax([0,0]) vs softmax([0, ln 3]): KL = .5 ln 2 + .5 ln(2/3).
  EXPECT_NEAR(d2e2s::row_kl(row2(0.0, 0.0), row2(0.0, std::log(3.0))).scalar(),
              0.1438, 1e-3);

  // Raising one row's symmetric divergence strictly lowers the loss.
  Rng rng(3);
  int checked = 0;
  while (checked < 100) {
    Mat syn = testutil::random_mat(4, 4, rng, -2.0, 2.0);
    Mat sem = testutil::random_mat(4, 4, rng, -2.0, 2.0);
    const int r = static_cast<int>(rng() % 4);
    Mat sem2 = sem;
    sem2.row(r) = testutil::random_mat(1, 4, rng, -2.0, 2.0).row(0);
    const double s_old =
        sym_kl(Var(Mat(syn.row(r)), false), Var(Mat(sem.row(r)), false));
    const double s_new =
        sym_kl(Var(Mat(syn.row(r)), false), Var(Mat(sem2.row(r)), false));
    if (std::abs(s_new - s_old) < 1e-9) continue;
    const double l_old =
        d2e2s::separation_loss(Var(syn, false), Var(sem, false)).scalar();
    const double l_new =
        d2e2s::separation_loss(Var(syn, false), Var(sem2, false)).scalar();
    if (s_new > s_old)
      EXPECT_LT(l_new, l_old) << "trial " << checked;
    else
      EXPECT_GT(l_new, l_old) << "trial " << checked;
    ++checked;
  }

  // Analytic gradient against central finite differences.
  Rng grng(4);
  Var syn(testutil::random_mat(3, 3, grng, -1.5, 1.5), true);
  Var sem(testutil::random_mat(3, 3, grng, -1.5, 1.5), true);
  auto loss = [&] { return d2e2s::separation_loss(syn, sem); };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {syn, sem}), 1e-4);
}

// ---------------------------------------------------------------------------
// Criterion 4 — span and scoring oracles.

TEST_F(Acceptance, Criterion4SpanAndScoreOracles) {
  describe(4, "span enumeration matches brute force for n <= 50, exact-match "
              "scoring matches a bipartite oracle on 500 instances, and gold "
              "vs gold scores 1.0 on every split");

  // Enumeration equals the double loop for every n <= 50 and several caps.
  for (int n = 1; n <= 50; ++n) {
    for (int max_len : {1, 3, 8, n}) {
      std::vector<Span> brute;
      for (int s = 0; s < n; ++s)
        for (int e = s; e < n && e - s < max_len; ++e)
          brute.push_back({s, e});
      ASSERT_EQ(d2e2s::enumerate_spans(n, max_len), brute)
          << "n=" << n << " max_len=" << max_len;
    }
  }

  // Scorer vs. the augmenting-path matching oracle.
  Rng rng(2);
  auto random_triplet = [&rng] {
    auto mk = [&rng] {
      int s = static_cast<int>(rng() % 4);
      return Span{s, s + static_cast<int>(rng() % 2)};
    };
    return Triplet{mk(), mk(), static_cast<Polarity>(rng() % 3)};
  };
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n_sent = 1 + rng() % 4;
    std::vector<std::vector<Triplet>> gold(n_sent), pred(n_sent);
    long want_matched = 0;
    for (std::size_t s = 0; s < n_sent; ++s) {
      for (unsigned k = rng() % 5; k > 0; --k)
        gold[s].push_back(random_triplet());
      for (unsigned k = rng() % 5; k > 0; --k)
        pred[s].push_back(random_triplet());
      if (rng() % 3 == 0 && !pred[s].empty())
        pred[s].push_back(pred[s].front());
      want_matched += bipartite_matches(pred[s], gold[s]);
    }
    ASSERT_EQ(d2e2s::score(pred, gold).overall.matched, want_matched)
        << "trial " << trial;
  }

  // Gold against itself is a perfect score on every available split.
  std::vector<std::pair<std::string, fs::path>> split_dirs;
  for (const char* split : {"train", "dev", "test"})
    split_dirs.emplace_back(split, kFixtureDir);
  const fs::path root = locate_real_data();
  if (!root.empty())
    for (const auto& [dataset, splits] : kReference)
      for (const char* split : {"train", "dev", "test"})
        split_dirs.emplace_back(split, dataset_dir(root, dataset));
  for (const auto& [split, dir] : split_dirs) {
    const fs::path file = find_split_file(dir, split);
    ASSERT_FALSE(file.empty()) << dir << "/" << split;
    std::vector<std::vector<Triplet>> gold;
    for (const d2e2s::RawExample& ex : d2e2s::read_v2_file(file)) {
      gold.emplace_back();
      for (const d2e2s::RawTriplet& t : ex.triplets)
        gold.back().push_back(d2e2s::to_triplet(t));
    }
    const d2e2s::EvalReport r = d2e2s::score(gold, gold);
    EXPECT_DOUBLE_EQ(r.overall.precision, 1.0) << file;
    EXPECT_DOUBLE_EQ(r.overall.recall, 1.0) << file;
    EXPECT_DOUBLE_EQ(r.overall.f1, 1.0) << file;
  }
}

// ---------------------------------------------------------------------------
// Criterion 5 — toy-scale learning.

TEST_F(Acceptance, Criterion5ToyOverfit) {
  describe(5, "toy backbone overfits the 10-sentence fixture to train F1 >= "
              "0.95 within 200 steps and 5 CPU minutes, with strictly "
              "decreasing loss over the first 20 steps");

  d2e2s::RunConfig cfg = d2e2s::load_run_config(kFixtureDir / "config.json");
  std::vector<d2e2s::Sentence> train = load_fixture_split("train");
  testutil::TempDir out("d2e2s-acc5");

  d2e2s::Trainer trainer(cfg, train, {}, out.path());
  const auto t0 = std::chrono::steady_clock::now();
  d2e2s::TrainResult result = trainer.run();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  EXPECT_LE(seconds, 300.0);
  EXPECT_LE(result.step_losses.size(), 200u);
  ASSERT_GE(result.step_losses.size(), 20u);
  for (int i = 0; i + 1 < 20; ++i)
    EXPECT_LT(result.step_losses[i + 1], result.step_losses[i])
        << "step " << i + 1;
  EXPECT_GE(result.best_dev_f1, 0.95);
}

// ---------------------------------------------------------------------------
// Criterion 6 — ablation wiring.

TEST_F(Acceptance, Criterion6AblationWiring) {
  describe(6, "all eight ablation configurations train end-to-end on the "
              "fixture and their module-call traces touch exactly the "
              "intended stages");

  std::vector<d2e2s::Sentence> train = load_fixture_split("train");
  d2e2s::RunConfig base = d2e2s::load_run_config(kFixtureDir / "config.json");
  base.epochs = 2;
  testutil::TempDir out("d2e2s-acc6");

  // Trace evidence on a tiny model: one forward pass per ablation.
  const d2e2s::Sentence& probe = train.front();
  for (const auto& [name, value] : d2e2s::ablation_table()) {
    d2e2s::ModelConfig cfg = tiny_model_config(name);
    d2e2s::Vocab vocab = d2e2s::Vocab::build_toy(train);
    d2e2s::D2e2sModel model(cfg, vocab.size(), 11);
    d2e2s::Tokenized tok =
        d2e2s::tokenize_sentence(vocab, probe, d2e2s::TokenizerKind::Toy);
    Rng rng(1);
    model.forward(probe, tok, /*training=*/true, rng);
    EXPECT_EQ(model.trace(), expected_trace(name)) << name;
  }

  // End-to-end evidence: a short training run per ablation.
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& [name, value] : d2e2s::ablation_table()) {
    d2e2s::RunConfig cfg = base;
    cfg.model.ablation = name;
    cfg.run_name = "acc_" + name;
    d2e2s::Trainer trainer(cfg, train, {}, out.path());
    d2e2s::TrainResult result;
    ASSERT_NO_THROW(result = trainer.run()) << name;
    EXPECT_EQ(result.epochs.size(), 2u) << name;
    EXPECT_TRUE(fs::exists(result.checkpoint)) << name;
    EXPECT_TRUE(fs::exists(result.metrics)) << name;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  EXPECT_LE(seconds, 1800.0);
}

// ---------------------------------------------------------------------------
// Criterion 7 — full-scale reproduction (optional).

TEST_F(Acceptance, Criterion7FullScaleReproduction) {
  describe(7, "full-scale training on the four public corpora reproduces the "
              "published F1 within tolerance");
  mark_skipped(
      "optional and not binding: needs pretrained backbone weights and "
      "GPU-scale training budgets, which this desk-scale suite does not "
      "assume");
  GTEST_SKIP();
}
