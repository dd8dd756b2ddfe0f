#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "json.hpp"
#include "mlcap/beam.hpp"
#include "mlcap/checkpoint.hpp"
#include "mlcap/dataset.hpp"

namespace mlcap::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("mlcap-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  void synth(int images = 120) {
    ASSERT_EQ(invoke({"synth", "--out", path("data.jsonl"), "--images", std::to_string(images)}).code,
              kOk);
  }

  Result train(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"train", "--data", path("data.jsonl"), "--out", path(out),
                                     "--hidden", "12", "--embed", "12", "--epochs", "2",
                                     "--batch", "32", "--min-count", "1", "--seed", "1"};
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  }

  fs::path dir;
};

TEST_F(CliTest, SynthIsStable) {
  synth(30);
  const std::string first = slurp(path("data.jsonl"));
  synth(30);
  EXPECT_EQ(slurp(path("data.jsonl")), first);
  EXPECT_FALSE(first.empty());
}

TEST_F(CliTest, BuildVocabListing) {
  synth(30);
  const auto r = invoke({"build-vocab", "--data", path("data.jsonl"), "--min-count", "1"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.out.rfind("0\t<pad>\n1\t<unk>\n2\t<eos>\n3\t<en>\n4\t<jp>\n", 0), 0u) << r.out;
}

TEST_F(CliTest, TrainWritesArtifactsDeterministically) {
  synth();
  const auto a = train("run-a");
  ASSERT_EQ(a.code, kOk) << a.err;
  const auto b = train("run-b");
  ASSERT_EQ(b.code, kOk) << b.err;
  for (const char* f : {"best.ckpt", "epoch-001.ckpt", "epoch-002.ckpt", "manifest.json",
                        "train.jsonl", "val.jsonl", "test.jsonl", "train.log"}) {
    EXPECT_TRUE(fs::exists(dir / "run-a" / f)) << f;
  }
  EXPECT_EQ(slurp(dir / "run-a" / "best.ckpt"), slurp(dir / "run-b" / "best.ckpt"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "run-a" / "manifest.json"));
  EXPECT_EQ(manifest["config"]["epochs"], 2);
  EXPECT_EQ(manifest["config"]["languages"], nlohmann::json({"en", "jp"}));
  EXPECT_EQ(manifest["split"]["val"], 9);
}

TEST_F(CliTest, BestOnlySkipsEpochCheckpoints) {
  synth();
  ASSERT_EQ(train("run", {"--best-only"}).code, kOk);
  EXPECT_TRUE(fs::exists(dir / "run" / "best.ckpt"));
  EXPECT_FALSE(fs::exists(dir / "run" / "epoch-001.ckpt"));
}

TEST_F(CliTest, DefaultManifestRecordsDefaultSettings) {
  synth(40);
  // Defaults except for what keeps the run short; the recorded config shows
  // the untouched defaults.
  const auto r = invoke({"train", "--data", path("data.jsonl"), "--out", path("run"), "--hidden",
                         "4", "--embed", "4", "--epochs", "1"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto cfg = nlohmann::json::parse(slurp(dir / "run" / "manifest.json"))["config"];
  EXPECT_EQ(cfg["batch_size"], 128);
  EXPECT_EQ(cfg["beam"], 5);
  EXPECT_EQ(cfg["seed"], 42);
  EXPECT_EQ(cfg["max_len"], 30);
}

TEST_F(CliTest, UsageErrors) {
  synth(20);
  EXPECT_EQ(train("run", {"--epochs", "0"}).code, kUsage);
  EXPECT_EQ(invoke({}).code, kUsage);
  EXPECT_EQ(invoke({"bogus"}).code, kUsage);
  EXPECT_EQ(invoke({"train", "--out", path("x")}).code, kUsage);
  EXPECT_EQ(invoke({"--help"}).code, kOk);
}

TEST_F(CliTest, DataErrors) {
  std::ofstream(path("bad.jsonl")) << "{\"image_id\": 1}\n";
  EXPECT_EQ(invoke({"build-vocab", "--data", path("bad.jsonl")}).code, kDataError);
  EXPECT_EQ(invoke({"build-vocab", "--data", path("missing.jsonl")}).code, kDataError);
}

TEST_F(CliTest, CaptionAndEvaluate) {
  synth();
  ASSERT_EQ(train("run").code, kOk);
  const std::string ckpt = path("run/best.ckpt");
  const std::string test = path("run/test.jsonl");

  const auto unknown = invoke({"caption", "--ckpt", ckpt, "--features", test, "--lang", "xx"});
  EXPECT_EQ(unknown.code, kUsage);
  EXPECT_NE(unknown.err.find("unknown language"), std::string::npos);
  EXPECT_NE(unknown.err.find("en, jp"), std::string::npos);

  const auto a = invoke({"caption", "--ckpt", ckpt, "--features", test, "--lang", "en"});
  const auto b = invoke({"caption", "--ckpt", ckpt, "--features", test, "--lang", "en"});
  ASSERT_EQ(a.code, kOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 9);

  // Beam width 1 is greedy decoding.
  const Checkpoint c = load_checkpoint(ckpt);
  const auto greedy_run = invoke({"caption", "--ckpt", ckpt, "--features", test, "--lang", "jp",
                                  "--beam", "1", "--out", path("jp.txt")});
  ASSERT_EQ(greedy_run.code, kOk);
  std::ifstream lines(path("jp.txt"));
  for (const auto& rec : load_dataset(test)) {
    const auto g = greedy_decode(rec.feature, c.vocab.start_id("jp"), c.params, c.vocab, 30);
    std::string expected = rec.image_id + "\t";
    const auto toks = decode(g.ids, c.vocab);
    for (std::size_t i = 0; i < toks.size(); ++i) expected += (i ? " " : "") + toks[i];
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, expected);
  }

  const auto ev = invoke({"evaluate", "--refs", test, "--candidates", "jp=" + path("jp.txt")});
  ASSERT_EQ(ev.code, kOk) << ev.err;
  const auto report = nlohmann::json::parse(ev.out);
  EXPECT_EQ(report["images"], 9);
  EXPECT_EQ(report["language"], "jp");
}

void write_perfect_candidates(const std::string& data, const std::string& en_path,
                              const std::string& jp_path) {
  std::ofstream en(en_path);
  std::ofstream jp(jp_path);
  for (const auto& rec : load_dataset(data)) {
    for (const auto& cap : rec.captions) {
      auto& out = cap.language == "en" ? en : jp;
      out << rec.image_id << '\t';
      for (std::size_t i = 0; i < cap.tokens.size(); ++i) out << (i ? " " : "") << cap.tokens[i];
      out << '\n';
    }
  }
}

TEST_F(CliTest, EvaluatePerfectPredictions) {
  // Disjoint references of at least four tokens.
  std::ofstream data(path("refs.jsonl"));
  data << R"({"image_id": "p", "feature": [1], "captions": [{"lang": "en", "tokens": ["a", "red", "round", "circle"]}, {"lang": "jp", "tokens": ["maru", "aka", "kirei", "desu"]}]})"
       << '\n'
       << R"({"image_id": "q", "feature": [2], "captions": [{"lang": "en", "tokens": ["one", "blue", "square", "box"]}, {"lang": "jp", "tokens": ["shikaku", "ao", "hako", "da"]}]})"
       << '\n';
  data.close();
  write_perfect_candidates(path("refs.jsonl"), path("en.txt"), path("jp.txt"));
  const auto r = invoke({"evaluate", "--refs", path("refs.jsonl"), "--candidates",
                         "en=" + path("en.txt"), "--candidates", "jp=" + path("jp.txt")});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  for (const char* key : {"bleu1", "bleu2", "bleu3", "bleu4", "cider"}) {
    EXPECT_EQ(report[key], 1.0) << key;
    EXPECT_EQ(report["languages"]["en"][key], 1.0) << key;
    EXPECT_EQ(report["languages"]["jp"][key], 1.0) << key;
  }
}

TEST_F(CliTest, EvaluatePerfectSyntheticPredictions) {
  // Synthetic captions have three tokens: no 4-grams, so BLEU-4 is 0 and
  // CIDEr averages three perfect n-gram orders with an empty fourth.
  synth(20);
  write_perfect_candidates(path("data.jsonl"), path("en.txt"), path("jp.txt"));
  const auto r = invoke({"evaluate", "--refs", path("data.jsonl"), "--candidates",
                         "en=" + path("en.txt"), "--candidates", "jp=" + path("jp.txt")});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["bleu1"], 1.0);
  EXPECT_EQ(report["bleu2"], 1.0);
  EXPECT_EQ(report["bleu3"], 1.0);
  EXPECT_EQ(report["bleu4"], 0.0);
  EXPECT_EQ(report["cider"], 0.75);
}

TEST(Gradcheck, SeedZeroPasses) {
  const auto r = invoke({"gradcheck", "--seed", "0"});
  EXPECT_EQ(r.code, kOk) << r.out;
  EXPECT_NE(r.out.find("max_rel_err"), std::string::npos);
}

TEST(Gradcheck, ImpossibleToleranceFails) {
  EXPECT_EQ(invoke({"gradcheck", "--tolerance", "1e-300"}).code, kGradcheckFailed);
}

}  // namespace
}  // namespace mlcap::cli
