// d2e2s command-line entry points: preprocess raw corpora into dependency
// sidecars plus split statistics, train a model from a JSON run config,
// evaluate a checkpoint, decode triplets for new sentences, and run the
// whole ablation suite.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "d2e2s/corpus.hpp"
#include "d2e2s/evaluation.hpp"
#include "d2e2s/model.hpp"
#include "d2e2s/tokenizer.hpp"
#include "d2e2s/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSplits[] = {"train", "dev", "test"};

// ---------------------------------------------------------------------------
// Split discovery. A split lives in `<dir>/<split>.txt` (our layout) or
// `<dir>/<split>_triplets.txt` (the published release layout); its sidecar is
// `<stem>.sidecar.jsonl` next to it.

fs::path find_split_file(const fs::path& dir, const std::string& split) {
  for (const std::string& name : {split + ".txt", split + "_triplets.txt"}) {
    fs::path p = dir / name;
    if (fs::exists(p)) return p;
  }
  return {};
}

fs::path sidecar_path_for(const fs::path& v2) {
  return v2.parent_path() / (v2.stem().string() + ".sidecar.jsonl");
}

std::vector<d2e2s::Sentence> load_split_required(const fs::path& dir,
                                                 const std::string& split) {
  const fs::path v2 = find_split_file(dir, split);
  if (v2.empty())
    throw d2e2s::NoDataFoundError(
        "no " + split + " split found in " + dir.string() +
        " (expected " + split + ".txt or " + split + "_triplets.txt)");
  const fs::path sc = sidecar_path_for(v2);
  if (!fs::exists(sc))
    throw d2e2s::NoDataFoundError("missing dependency sidecar " + sc.string() +
                                  "; run `d2e2s preprocess` first");
  return d2e2s::load_sentences(v2, sc);
}

std::vector<d2e2s::Sentence> load_split_optional(const fs::path& dir,
                                                 const std::string& split) {
  if (find_split_file(dir, split).empty()) return {};
  return load_split_required(dir, split);
}

// ---------------------------------------------------------------------------
// Parser-output ingestion. Dependency parses arrive either already in the
// sidecar JSONL format or as CoNLL files (full CoNLL-U rows or a minimal
// 4-column id/form/head/deprel variant); heads use 0 for the root and 1-based
// indices otherwise in both.

bool plain_integer(const std::string& s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

std::vector<d2e2s::SidecarRecord> read_conll_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw d2e2s::NoDataFoundError("cannot open " + path.string());
  std::vector<d2e2s::SidecarRecord> out;
  d2e2s::SidecarRecord cur;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      out.push_back(cur);
      cur = {};
    }
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') continue;
    std::vector<std::string> cols = d2e2s::split_whitespace(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() < 4)
      throw d2e2s::MalformedLineError(
          where + ": CoNLL row needs at least id, form, head, deprel");
    if (!plain_integer(cols[0])) continue;  // multiword ranges, empty nodes
    const bool full_row = cols.size() >= 8;
    const std::string& head_text = full_row ? cols[6] : cols[2];
    const std::string& label = full_row ? cols[7] : cols[3];
    if (!plain_integer(head_text))
      throw d2e2s::MalformedLineError(where + ": head column '" + head_text +
                                      "' is not an integer");
    cur.tokens.push_back(cols[1]);
    cur.heads.push_back(std::stoi(head_text));
    cur.labels.push_back(label);
  }
  flush();
  return out;
}

// Looks for parser output for one split file: first under --parses (both in a
// per-dataset subdirectory and flat), then next to the split file itself.
std::optional<std::vector<d2e2s::SidecarRecord>> find_parses(
    const fs::path& v2, const fs::path& parses_dir, const std::string& dataset,
    const std::string& split) {
  std::vector<fs::path> dirs;
  if (!parses_dir.empty()) {
    dirs.push_back(parses_dir / dataset);
    dirs.push_back(parses_dir);
  }
  dirs.push_back(v2.parent_path());
  std::vector<std::string> stems = {v2.stem().string()};
  if (stems.front() != split) stems.push_back(split);
  for (const fs::path& dir : dirs) {
    for (const std::string& stem : stems) {
      fs::path jsonl = dir / (stem + ".sidecar.jsonl");
      if (fs::exists(jsonl)) return d2e2s::read_sidecar_file(jsonl);
      for (const char* ext : {".conllu", ".conll"}) {
        fs::path conll = dir / (stem + ext);
        if (fs::exists(conll)) return read_conll_file(conll);
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Output helpers.

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(s[0]));
  return s;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw d2e2s::Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json triplets_json(const std::vector<d2e2s::Triplet>& triplets) {
  json arr = json::array();
  for (const d2e2s::Triplet& t : triplets)
    arr.push_back({{"aspect", {t.aspect.start, t.aspect.end}},
                   {"opinion", {t.opinion.start, t.opinion.end}},
                   {"polarity", d2e2s::to_string(t.polarity)}});
  return arr;
}

d2e2s::TokenizerKind tokenizer_kind(const d2e2s::RunConfig& cfg) {
  return cfg.model.encoder.backbone == "toy" ? d2e2s::TokenizerKind::Toy
                                             : d2e2s::TokenizerKind::WordPiece;
}

// ---------------------------------------------------------------------------
// preprocess

int cmd_preprocess(const fs::path& data_dir, const fs::path& parses_dir,
                   const fs::path& out_dir) {
  if (!fs::is_directory(data_dir))
    throw d2e2s::NoDataFoundError("data directory " + data_dir.string() +
                                  " does not exist");
  auto has_any_split = [](const fs::path& dir) {
    for (const char* split : kSplits)
      if (!find_split_file(dir, split).empty()) return true;
    return false;
  };

  struct Dataset {
    std::string name;
    fs::path dir;
  };
  std::vector<Dataset> datasets;
  if (has_any_split(data_dir)) {
    datasets.push_back({data_dir.filename().string(), data_dir});
  } else {
    std::vector<fs::path> subdirs;
    for (const auto& entry : fs::directory_iterator(data_dir))
      if (entry.is_directory()) subdirs.push_back(entry.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const fs::path& dir : subdirs)
      if (has_any_split(dir)) datasets.push_back({dir.filename().string(), dir});
  }
  if (datasets.empty())
    throw d2e2s::NoDataFoundError("no split files found under " +
                                  data_dir.string());

  std::cout << std::left << std::setw(12) << "Dataset" << std::setw(8)
            << "Split" << std::right << std::setw(7) << "NEU" << std::setw(7)
            << "POS" << std::setw(7) << "NEG" << std::setw(7) << "#S"
            << std::setw(7) << "#T" << "\n";

  json manifest = json::array();
  for (const Dataset& ds : datasets) {
    for (const char* split : kSplits) {
      const fs::path v2 = find_split_file(ds.dir, split);
      if (v2.empty()) continue;
      const std::vector<d2e2s::RawExample> examples = d2e2s::read_v2_file(v2);
      const d2e2s::CorpusStats stats = d2e2s::compute_stats(examples);
      std::cout << std::left << std::setw(12) << ds.name << std::setw(8)
                << capitalize(split) << std::right << std::setw(7) << stats.neu
                << std::setw(7) << stats.pos << std::setw(7) << stats.neg
                << std::setw(7) << stats.sentences << std::setw(7)
                << stats.triplets << "\n";

      const fs::path ds_out = out_dir / ds.name;
      fs::create_directories(ds_out);
      const fs::path v2_out = ds_out / (std::string(split) + ".txt");
      if (!fs::exists(v2_out) || !fs::equivalent(v2, v2_out))
        fs::copy_file(v2, v2_out, fs::copy_options::overwrite_existing);

      json entry = {{"dataset", ds.name},
                    {"split", split},
                    {"source", v2.string()},
                    {"sentences", stats.sentences},
                    {"triplets", stats.triplets}};
      auto records = find_parses(v2, parses_dir, ds.name, split);
      if (records) {
        if (records->size() != examples.size())
          throw d2e2s::IdMismatchError(
              v2.string() + " has " + std::to_string(examples.size()) +
              " sentences but its parser output has " +
              std::to_string(records->size()) + " records");
        for (std::size_t i = 0; i < examples.size(); ++i)
          d2e2s::attach_dependencies(examples[i], (*records)[i],
                                     static_cast<int>(i));
        const fs::path sc_out = ds_out / (std::string(split) + ".sidecar.jsonl");
        d2e2s::write_sidecar_file(sc_out, *records);
        entry["sidecar"] = sc_out.string();
      } else {
        std::cerr << "warning: no parser output found for " << v2.string()
                  << " — sidecar not written\n";
        entry["sidecar"] = nullptr;
      }
      manifest.push_back(std::move(entry));
    }
  }

  fs::create_directories(out_dir);
  write_json_file(out_dir / "preprocess.config.json",
                  {{"command", "preprocess"},
                   {"data_dir", data_dir.string()},
                   {"parses", parses_dir.string()},
                   {"out_dir", out_dir.string()},
                   {"outputs", manifest}});
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct Overrides {
  CLI::Option* seed = nullptr;
  CLI::Option* ablation = nullptr;
  CLI::Option* backbone = nullptr;
  unsigned long seed_value = 0;
  std::string ablation_value;
  std::string backbone_value;

  void apply(d2e2s::RunConfig& cfg) const {
    if (seed && seed->count()) cfg.seed = seed_value;
    if (ablation && ablation->count()) cfg.model.ablation = ablation_value;
    if (backbone && backbone->count())
      cfg.model.encoder.backbone = backbone_value;
  }
};

int cmd_train(const fs::path& cfg_path, const fs::path& data_dir,
              const fs::path& out_dir, const Overrides& over) {
  d2e2s::RunConfig cfg = d2e2s::load_run_config(cfg_path);
  over.apply(cfg);
  cfg.validate();

  std::vector<d2e2s::Sentence> train = load_split_required(data_dir, "train");
  std::vector<d2e2s::Sentence> dev = load_split_optional(data_dir, "dev");
  const char* dev_note = dev.empty() ? " (no dev split; evaluating on train)"
                                     : "";
  std::cout << "train: " << train.size() << " sentences, dev: " << dev.size()
            << dev_note << "\n";

  const fs::path run_dir = out_dir / cfg.run_name;
  fs::create_directories(run_dir);
  write_json_file(run_dir / "config.json", d2e2s::to_json(cfg));

  d2e2s::Trainer trainer(cfg, std::move(train), std::move(dev), out_dir);
  trainer.on_epoch = [](const d2e2s::EpochRecord& r) {
    std::cout << "epoch " << std::setw(4) << r.epoch << "  steps "
              << std::setw(6) << r.steps << "  loss " << std::fixed
              << std::setprecision(4) << r.train_loss << "  dev F1 "
              << r.dev_f1 << (r.best ? "  *" : "") << "\n";
  };
  d2e2s::TrainResult result = trainer.run();

  std::cout << "best dev F1 " << std::fixed << std::setprecision(4)
            << result.best_dev_f1 << " at epoch " << result.best_epoch << "\n"
            << "checkpoint: " << result.checkpoint.string() << "\n"
            << "metrics:    " << result.metrics.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const fs::path& ckpt_path, const fs::path& data_dir,
             const std::string& split, fs::path out_dir) {
  d2e2s::LoadedCheckpoint ckpt = d2e2s::load_checkpoint(ckpt_path);
  std::vector<d2e2s::Sentence> sentences = load_split_required(data_dir, split);
  d2e2s::EvalReport rep = d2e2s::evaluate_split(
      *ckpt.model, *ckpt.vocab, sentences, tokenizer_kind(ckpt.config));

  std::cout << split << " split, " << sentences.size() << " sentences\n"
            << d2e2s::report_table(rep);

  if (out_dir.empty()) out_dir = ckpt_path.parent_path();
  if (out_dir.empty()) out_dir = ".";
  fs::create_directories(out_dir);
  json report = d2e2s::report_json(rep);
  report["checkpoint"] = ckpt_path.string();
  report["split"] = split;
  report["sentences"] = sentences.size();
  report["config"] = d2e2s::to_json(ckpt.config);
  const fs::path report_path = out_dir / ("eval." + split + ".json");
  write_json_file(report_path, report);
  std::cout << "report: " << report_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// predict

int cmd_predict(const fs::path& ckpt_path, const fs::path& input,
                const fs::path& sidecar, const fs::path& out_path) {
  d2e2s::LoadedCheckpoint ckpt = d2e2s::load_checkpoint(ckpt_path);

  std::ifstream in(input);
  if (!in) throw d2e2s::NoDataFoundError("cannot open " + input.string());
  std::vector<d2e2s::RawExample> examples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      if (line.find("####") != std::string::npos) {
        examples.push_back(d2e2s::parse_v2_line(line));
      } else {
        d2e2s::RawExample ex;
        ex.text = line;
        ex.words = d2e2s::split_whitespace(line);
        if (ex.words.empty())
          throw d2e2s::MalformedLineError("blank sentence");
        examples.push_back(std::move(ex));
      }
    } catch (const d2e2s::MalformedLineError& e) {
      throw d2e2s::MalformedLineError(input.string() + ":" +
                                      std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<d2e2s::SidecarRecord> records = d2e2s::read_sidecar_file(sidecar);
  if (records.size() != examples.size())
    throw d2e2s::IdMismatchError(
        input.string() + " has " + std::to_string(examples.size()) +
        " sentences but " + sidecar.string() + " has " +
        std::to_string(records.size()) + " records");

  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw d2e2s::Error("cannot write " + out_path.string());
  }
  std::ostream& os = out_path.empty() ? std::cout : file;

  const d2e2s::TokenizerKind kind = tokenizer_kind(ckpt.config);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    d2e2s::Sentence s = d2e2s::attach_dependencies(examples[i], records[i],
                                                   static_cast<int>(i));
    d2e2s::Tokenized tok = d2e2s::tokenize_sentence(*ckpt.vocab, s, kind);
    json row = {{"sentence_id", s.id},
                {"triplets", triplets_json(ckpt.model->predict(s, tok))}};
    os << row.dump() << "\n";
  }
  if (!out_path.empty()) {
    fs::path snap = out_path;
    snap.replace_extension(".config.json");
    write_json_file(snap, {{"command", "predict"},
                           {"checkpoint", ckpt_path.string()},
                           {"input", input.string()},
                           {"sidecar", sidecar.string()},
                           {"config", d2e2s::to_json(ckpt.config)}});
  }
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

int cmd_ablate(const fs::path& cfg_path, const fs::path& data_dir,
               const fs::path& out_dir, const Overrides& over,
               const std::string& only) {
  d2e2s::RunConfig base = d2e2s::load_run_config(cfg_path);
  over.apply(base);
  base.validate();
  if (!only.empty()) d2e2s::parse_ablation(only);

  std::vector<d2e2s::Sentence> train = load_split_required(data_dir, "train");
  std::vector<d2e2s::Sentence> dev = load_split_optional(data_dir, "dev");

  fs::create_directories(out_dir);
  write_json_file(out_dir / "ablate.config.json",
                  {{"command", "ablate"},
                   {"data_dir", data_dir.string()},
                   {"out_dir", out_dir.string()},
                   {"only", only},
                   {"base_config", d2e2s::to_json(base)}});
  const fs::path rows_path = out_dir / "ablations.jsonl";
  std::ofstream rows(rows_path, std::ios::trunc);
  if (!rows) throw d2e2s::Error("cannot write " + rows_path.string());

  bool all_ok = true;
  for (const auto& [name, value] : d2e2s::ablation_table()) {
    if (!only.empty() && name != only) continue;
    d2e2s::RunConfig cfg = base;
    cfg.model.ablation = name;
    cfg.run_name = base.run_name + "_" + name;
    json row = {{"ablation", name}};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      d2e2s::Trainer trainer(cfg, train, dev, out_dir);
      d2e2s::TrainResult res = trainer.run();
      row["status"] = "ok";
      row["best_dev_f1"] = res.best_dev_f1;
      row["best_epoch"] = res.best_epoch;
      row["steps"] = res.step_losses.size();
      row["checkpoint"] = res.checkpoint.string();
    } catch (const std::exception& e) {
      all_ok = false;
      row["status"] = "error";
      row["message"] = e.what();
    }
    row["seconds"] = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    rows << row.dump() << "\n";
    rows.flush();
    std::cout << row.dump() << "\n";
  }
  std::cout << "rows: " << rows_path.string() << "\n";
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"d2e2s: span-based aspect sentiment triplet extraction"};
  app.require_subcommand(1);

  std::vector<std::string> ablation_names;
  for (const auto& [name, value] : d2e2s::ablation_table())
    ablation_names.push_back(name);

  // preprocess
  std::string pre_data, pre_parses, pre_out = "out";
  CLI::App* pre = app.add_subcommand(
      "preprocess", "Parse raw split files, emit sidecars and statistics");
  pre->add_option("--data-dir", pre_data, "directory with raw split files")
      ->required();
  pre->add_option("--parses", pre_parses,
                  "directory with parser output (.sidecar.jsonl or .conllu)");
  pre->add_option("--out-dir", pre_out, "output directory");

  // train
  std::string tr_cfg, tr_data, tr_out = "out";
  Overrides tr_over;
  CLI::App* tr =
      app.add_subcommand("train", "Train a model from a JSON run config");
  tr->add_option("--config", tr_cfg, "run config JSON")->required();
  tr->add_option("--data-dir", tr_data, "directory with train/dev splits")
      ->required();
  tr->add_option("--out-dir", tr_out, "output directory");
  tr_over.seed = tr->add_option("--seed", tr_over.seed_value,
                                "override the config seed");
  tr_over.ablation =
      tr->add_option("--ablation", tr_over.ablation_value,
                     "override the model ablation")
          ->check(CLI::IsMember(ablation_names));
  tr_over.backbone =
      tr->add_option("--backbone", tr_over.backbone_value,
                     "override the encoder backbone")
          ->check(CLI::IsMember({"pretrained", "toy"}));

  // eval
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
  CLI::App* ev = app.add_subcommand("eval", "Score a checkpoint on a split");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data-dir", ev_data, "directory with the split")->required();
  ev->add_option("--split", ev_split, "split name (default: test)");
  ev->add_option("--out-dir", ev_out,
                 "report directory (default: next to the checkpoint)");

  // predict
  std::string pr_ckpt, pr_input, pr_sidecar, pr_out;
  CLI::App* pr =
      app.add_subcommand("predict", "Decode triplets for new sentences");
  pr->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
  pr->add_option("--input", pr_input,
                 "sentence file (plain text or annotated lines)")
      ->required();
  pr->add_option("--sidecar", pr_sidecar, "dependency sidecar JSONL")
      ->required();
  pr->add_option("--out", pr_out, "output JSONL file (default: stdout)");

  // ablate
  std::string ab_cfg, ab_data, ab_out = "out", ab_only;
  Overrides ab_over;
  CLI::App* ab = app.add_subcommand(
      "ablate", "Train every ablation configuration and tabulate results");
  ab->add_option("--config", ab_cfg, "base run config JSON")->required();
  ab->add_option("--data-dir", ab_data, "directory with train/dev splits")
      ->required();
  ab->add_option("--out-dir", ab_out, "output directory");
  ab->add_option("--ablation", ab_only, "run only this configuration")
      ->check(CLI::IsMember(ablation_names));
  ab_over.seed =
      ab->add_option("--seed", ab_over.seed_value, "override the config seed");
  ab_over.backbone =
      ab->add_option("--backbone", ab_over.backbone_value,
                     "override the encoder backbone")
          ->check(CLI::IsMember({"pretrained", "toy"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_preprocess(pre_data, pre_parses, pre_out);
    if (tr->parsed()) return cmd_train(tr_cfg, tr_data, tr_out, tr_over);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_split, ev_out);
    if (pr->parsed()) return cmd_predict(pr_ckpt, pr_input, pr_sidecar, pr_out);
    if (ab->parsed()) return cmd_ablate(ab_cfg, ab_data, ab_out, ab_over, ab_only);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
