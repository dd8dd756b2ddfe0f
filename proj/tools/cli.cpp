#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "gradient_suite.hpp"
#include "mlcap/beam.hpp"
#include "mlcap/checkpoint.hpp"
#include "mlcap/dataset.hpp"
#include "mlcap/errors.hpp"
#include "mlcap/metrics.hpp"
#include "mlcap/synth.hpp"
#include "mlcap/trainer.hpp"

namespace mlcap::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown for flag combinations CLI11 cannot validate on its own.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Output sink that is either a file or the command's stdout stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw DataError("cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

std::vector<std::string> dataset_languages(std::span<const ImageRecord> records) {
  std::set<std::string> langs;
  for (const auto& rec : records) {
    for (const auto& cap : rec.captions) langs.insert(cap.language);
  }
  return {langs.begin(), langs.end()};
}

std::vector<LabeledTokens> vocab_corpus(std::span<const ImageRecord> records,
                                        std::span<const std::string> languages,
                                        bool lower) {
  std::vector<LabeledTokens> corpus;
  for (const auto& rec : records) {
    for (const auto& cap : rec.captions) {
      if (std::find(languages.begin(), languages.end(), cap.language) == languages.end()) {
        continue;
      }
      corpus.push_back({cap.language, lower ? lowercase(cap.tokens) : cap.tokens});
    }
  }
  return corpus;
}

std::vector<std::string> resolve_languages(const std::string& flag,
                                           std::span<const ImageRecord> records) {
  std::vector<std::string> langs = flag.empty() ? dataset_languages(records) : split_list(flag);
  std::sort(langs.begin(), langs.end());
  langs.erase(std::unique(langs.begin(), langs.end()), langs.end());
  if (langs.empty()) throw DataError("no caption languages found");
  return langs;
}

SplitCounts parse_split(const std::string& flag, std::size_t records) {
  if (flag.empty()) return proportional_split(records);
  const auto parts = split_list(flag);
  if (parts.size() != 3) throw UsageError("--split expects TRAIN,VAL,TEST counts");
  try {
    return {std::stoul(parts[0]), std::stoul(parts[1]), std::stoul(parts[2])};
  } catch (const std::exception&) {
    throw UsageError("--split expects TRAIN,VAL,TEST counts");
  }
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  std::size_t images = 1200;
  std::string langs = "en,jp";
  std::uint64_t seed = 42;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto langs = split_list(a.langs);
  if (langs.empty()) throw UsageError("--langs must name at least one language");
  const auto records = synth_generate(a.images, a.seed, langs);
  Sink sink(a.out, out);
  write_dataset(sink.get(), records);
  return kOk;
}

// ---------------------------------------------------------------------------
// build-vocab

struct VocabArgs {
  std::string data;
  std::string out;
  std::string langs;
  int min_count = 5;
  bool lowercase = false;
};

int cmd_build_vocab(const VocabArgs& a, std::ostream& out) {
  const auto records = load_dataset(a.data);
  const auto langs = resolve_languages(a.langs, records);
  const auto corpus = vocab_corpus(records, langs, a.lowercase);
  const Vocabulary vocab = Vocabulary::build(corpus, a.min_count);
  Sink sink(a.out, out);
  for (TokenId id = 0; id < vocab.size(); ++id) {
    sink.get() << id << '\t' << vocab.token(id) << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string langs;
  std::string split;
  bool loss_sum = false;
  bool best_only = false;
  double learning_rate = 1e-3;
  TrainConfig config;
};

std::string epoch_line(const EpochRecord& r) {
  std::ostringstream s;
  s << r.epoch << '\t' << std::setprecision(10) << r.train_loss << '\t' << r.val_cider << '\t'
    << std::setprecision(4) << r.seconds;
  return s.str();
}

int cmd_train(TrainArgs a, std::ostream& out) {
  TrainConfig& config = a.config;
  if (a.loss_sum) config.loss_mode = LossMode::kSum;
  config.adam.learning_rate = a.learning_rate;

  auto records = load_dataset(a.data);
  if (records.empty()) throw DataError(a.data + " contains no images");
  config.languages = resolve_languages(a.langs, records);
  config.validate();
  if (config.feature_l2norm) l2_normalize_features(records);

  const SplitCounts counts = parse_split(a.split, records.size());
  const DatasetSplit split = split_dataset(records, counts, config.seed);
  if (split.train.empty() || split.val.empty()) {
    throw DataError("split leaves the training or validation set empty");
  }

  const Vocabulary vocab = Vocabulary::build(
      vocab_corpus(split.train, config.languages, config.lowercase), config.min_count);
  const auto examples = make_examples(split.train, vocab, config.languages, config.lowercase);
  if (examples.empty()) throw DataError("no training captions in the requested languages");

  const ModelDims dims{vocab.size(), config.embed, config.hidden,
                       split.train.front().feature.size()};
  const std::string config_json = config_to_json(config);

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  save_dataset(dir / "train.jsonl", split.train);
  save_dataset(dir / "val.jsonl", split.val);
  save_dataset(dir / "test.jsonl", split.test);

  std::ofstream log(dir / "train.log", std::ios::trunc);
  if (!log) throw DataError("cannot write " + (dir / "train.log").string());

  const auto on_epoch = [&](const EpochRecord& record, const ModelParams& params) {
    const std::string line = epoch_line(record);
    out << line << '\n' << std::flush;
    log << line << '\n' << std::flush;
    if (!a.best_only) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch-%03zu.ckpt", record.epoch);
      save_checkpoint(dir / name, {Checkpoint::kVersion, params, vocab, config_json, record.epoch});
    }
  };
  const TrainResult result =
      train(init_params(dims, config.seed), examples, split.val, vocab, config, on_epoch);
  save_checkpoint(dir / "best.ckpt",
                  {Checkpoint::kVersion, result.best, vocab, config_json, result.best_epoch});

  json manifest;
  manifest["artifact_version"] = kVersion;
  manifest["command"] = "train";
  manifest["seed"] = config.seed;
  manifest["config"] = json::parse(config_json);
  manifest["paths"] = {{"data", a.data}, {"out", a.out}};
  manifest["split"] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  manifest["best_only"] = a.best_only;
  manifest["dims"] = {{"vocab", dims.vocab}, {"embed", dims.embed},
                      {"hidden", dims.hidden}, {"feature", dims.feature}};
  manifest["best_epoch"] = result.best_epoch;
  json history = json::array();
  for (const auto& r : result.history) {
    history.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_cider", r.val_cider}});
  }
  manifest["history"] = std::move(history);
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// caption

struct CaptionArgs {
  std::string ckpt;
  std::string features;
  std::string lang;
  std::string out;
  std::size_t beam = 5;
  std::size_t max_len = 30;
  bool length_norm = false;
  bool feature_l2norm = false;
};

int cmd_caption(const CaptionArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  if (!ckpt.vocab.has_language(a.lang)) {
    std::string known;
    for (const auto& l : ckpt.vocab.languages()) known += (known.empty() ? "" : ", ") + l;
    throw UsageError("unknown language '" + a.lang + "'; available: " + known);
  }
  auto records = load_dataset(a.features, {.require_captions = false});
  const TrainConfig trained = config_from_json(ckpt.config_json);
  if (a.feature_l2norm || trained.feature_l2norm) l2_normalize_features(records);

  const TokenId start = ckpt.vocab.start_id(a.lang);
  const BeamConfig beam{a.beam, a.max_len, a.length_norm};
  Sink sink(a.out, out);
  for (const auto& rec : records) {
    const auto results = beam_search(rec.feature, start, ckpt.params, ckpt.vocab, beam);
    std::string line;
    if (!results.empty()) {
      for (const auto& tok : decode(results.front().ids, ckpt.vocab)) {
        line += (line.empty() ? "" : " ") + tok;
      }
    }
    sink.get() << rec.image_id << '\t' << line << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string refs;
  std::vector<std::string> candidates;
  std::string lang;
  std::string out;
};

// Lines of "image_id<TAB>space separated tokens".
std::vector<std::pair<std::string, std::vector<std::string>>> read_candidates(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open candidates " + path);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path + ":" + std::to_string(number) + ": expected image_id<TAB>tokens");
    }
    std::string id = line.substr(0, tab);
    if (!seen.insert(id).second) {
      throw DataError(path + ":" + std::to_string(number) + ": duplicate image_id " + id);
    }
    out.emplace_back(std::move(id), split_whitespace(std::string_view(line).substr(tab + 1)));
  }
  return out;
}

json report_json(const MetricReport& r) {
  return {{"bleu1", r.bleu[0]}, {"bleu2", r.bleu[1]}, {"bleu3", r.bleu[2]},
          {"bleu4", r.bleu[3]}, {"cider", r.cider},   {"images", r.images},
          {"candidate_tokens", r.candidate_tokens}};
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto refs = load_dataset(a.refs);
  std::map<std::string, const ImageRecord*> by_id;
  for (const auto& rec : refs) by_id.emplace(rec.image_id, &rec);
  const auto ref_langs = dataset_languages(refs);

  // language -> candidates file
  std::vector<std::pair<std::string, std::string>> inputs;
  for (const auto& entry : a.candidates) {
    const auto eq = entry.find('=');
    if (eq != std::string::npos) {
      inputs.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
    } else if (!a.lang.empty()) {
      inputs.emplace_back(a.lang, entry);
    } else if (ref_langs.size() == 1) {
      inputs.emplace_back(ref_langs.front(), entry);
    } else {
      throw UsageError("references hold several languages; pass --lang or LANG=PATH");
    }
  }

  std::map<std::string, std::vector<EvalItem>> per_language;
  std::vector<EvalItem> pooled;
  for (const auto& [lang, path] : inputs) {
    if (per_language.contains(lang)) throw UsageError("language " + lang + " given twice");
    auto& items = per_language[lang];
    for (auto& [id, tokens] : read_candidates(path)) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError(path + ": image " + id + " not in references");
      EvalItem item;
      item.candidate = std::move(tokens);
      for (const auto& cap : it->second->captions) {
        if (cap.language == lang) item.references.push_back(cap.tokens);
      }
      if (item.references.empty()) {
        throw DataError("image " + id + " has no '" + lang + "' reference captions");
      }
      items.push_back(item);
      pooled.push_back(std::move(item));
    }
    if (items.empty()) throw DataError(path + " contains no candidates");
  }

  json report = report_json(evaluate_corpus(pooled));
  if (per_language.size() > 1) {
    json langs = json::object();
    for (const auto& [lang, items] : per_language) langs[lang] = report_json(evaluate_corpus(items));
    report["languages"] = std::move(langs);
  } else {
    report["language"] = per_language.begin()->first;
  }
  Sink sink(a.out, out);
  sink.get() << report.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::uint64_t seed = 42;
  double h = 1e-5;
  double tolerance = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const auto entries = run_gradient_suite(a.seed, a.h, a.tolerance);
  bool ok = true;
  double worst = 0.0;
  for (const auto& e : entries) {
    out << e.name << '\t' << std::scientific << std::setprecision(3)
        << e.result.max_relative_error << '\t' << (e.passed ? "ok" : "FAIL") << '\n';
    ok = ok && e.passed;
    worst = std::max(worst, e.result.max_relative_error);
  }
  out << "max_rel_err\t" << std::scientific << std::setprecision(3) << worst << '\n'
      << std::defaultfloat;
  return ok ? kOk : kGradcheckFailed;
}

// ---------------------------------------------------------------------------
// import-coco

struct ImportArgs {
  std::string annotations;
  std::string features;
  std::string lang = "en";
  std::string out;
  bool lowercase = false;
};

int cmd_import_coco(const ImportArgs& a, std::ostream& out) {
  const auto records = import_coco(a.annotations, a.features, a.lang, a.lowercase);
  Sink sink(a.out, out);
  write_dataset(sink.get(), records);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Caption images in several languages with one LSTM decoder", "mlcap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  const auto positive = CLI::PositiveNumber;

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic bilingual JSONL dataset");
  synth_cmd->add_option("--out", synth.out, "Output path (default stdout)");
  synth_cmd->add_option("--images", synth.images, "Number of images")->check(positive);
  synth_cmd->add_option("--langs", synth.langs, "Comma-separated language codes");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");

  VocabArgs vocab;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "List the vocabulary built from a dataset");
  vocab_cmd->add_option("--data", vocab.data, "JSONL dataset")->required();
  vocab_cmd->add_option("--out", vocab.out, "Output path (default stdout)");
  vocab_cmd->add_option("--langs", vocab.langs, "Comma-separated language codes");
  vocab_cmd->add_option("--min-count", vocab.min_count, "Minimum token frequency")->check(positive);
  vocab_cmd->add_flag("--lowercase", vocab.lowercase, "Lowercase ASCII letters");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one caption model");
  train_cmd->add_option("--data", tr.data, "JSONL dataset")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--langs", tr.langs, "Comma-separated language codes (default: all)");
  train_cmd->add_option("--split", tr.split, "TRAIN,VAL,TEST image counts");
  train_cmd->add_option("--seed", tr.config.seed, "Random seed");
  train_cmd->add_option("--min-count", tr.config.min_count, "Minimum token frequency")->check(positive);
  train_cmd->add_flag("--lowercase", tr.config.lowercase, "Lowercase ASCII letters");
  train_cmd->add_option("--hidden", tr.config.hidden, "LSTM hidden units")->check(positive);
  train_cmd->add_option("--embed", tr.config.embed, "Embedding size")->check(positive);
  train_cmd->add_option("--epochs", tr.config.epochs, "Training epochs")->check(positive);
  train_cmd->add_option("--batch", tr.config.batch_size, "Batch size")->check(positive);
  train_cmd->add_option("--beam", tr.config.beam, "Generation beam width")->check(positive);
  train_cmd->add_option("--val-beam", tr.config.val_beam, "Validation beam width")->check(positive);
  train_cmd->add_option("--max-len", tr.config.max_len, "Maximum caption length")->check(positive);
  train_cmd->add_option("--lr", tr.learning_rate, "Adam learning rate")->check(CLI::NonNegativeNumber);
  train_cmd->add_flag("--loss-sum", tr.loss_sum, "Optimize the summed NLL instead of the per-token mean");
  train_cmd->add_flag("--clip", tr.config.clip, "Clip the gradient norm at 5");
  train_cmd->add_flag("--length-norm", tr.config.length_norm, "Rank beams by log-prob per token");
  train_cmd->add_flag("--feature-l2norm", tr.config.feature_l2norm, "L2-normalize image features");
  train_cmd->add_flag("--best-only", tr.best_only, "Only write best.ckpt");

  CaptionArgs cap;
  auto* caption_cmd = app.add_subcommand("caption", "Caption images in a chosen language");
  caption_cmd->add_option("--ckpt", cap.ckpt, "Checkpoint")->required();
  caption_cmd->add_option("--features", cap.features, "JSONL image features")->required();
  caption_cmd->add_option("--lang", cap.lang, "Output language code")->required();
  caption_cmd->add_option("--out", cap.out, "Output path (default stdout)");
  caption_cmd->add_option("--beam", cap.beam, "Beam width")->check(positive);
  caption_cmd->add_option("--max-len", cap.max_len, "Maximum caption length")->check(positive);
  caption_cmd->add_flag("--length-norm", cap.length_norm, "Rank beams by log-prob per token");
  caption_cmd->add_flag("--feature-l2norm", cap.feature_l2norm, "L2-normalize image features");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score captions with BLEU-1..4 and CIDEr");
  eval_cmd->add_option("--refs,--data", ev.refs, "JSONL dataset with reference captions")->required();
  eval_cmd->add_option("--candidates", ev.candidates, "Captions file, or LANG=PATH (repeatable)")
      ->required();
  eval_cmd->add_option("--lang", ev.lang, "Language of unlabeled candidates files");
  eval_cmd->add_option("--out", ev.out, "Output path (default stdout)");

  GradcheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad_cmd->add_option("--seed", gc.seed, "Random seed");
  grad_cmd->add_option("--step", gc.h, "Finite-difference step")->check(positive);
  grad_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error")->check(positive);

  ImportArgs imp;
  auto* import_cmd = app.add_subcommand("import-coco", "Convert MSCOCO-style annotations");
  import_cmd->add_option("--annotations", imp.annotations, "Caption annotation JSON")->required();
  import_cmd->add_option("--features", imp.features, "JSONL image features")->required();
  import_cmd->add_option("--lang", imp.lang, "Language code of the captions");
  import_cmd->add_option("--out", imp.out, "Output path (default stdout)");
  import_cmd->add_flag("--lowercase", imp.lowercase, "Lowercase ASCII letters");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*vocab_cmd) return cmd_build_vocab(vocab, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*caption_cmd) return cmd_caption(cap, out);
    if (*eval_cmd) return cmd_evaluate(ev, out);
    if (*grad_cmd) return cmd_gradcheck(gc, out);
    if (*import_cmd) return cmd_import_coco(imp, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace mlcap::cli
