#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kSamples = HNETPP_SAMPLES_DIR;

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "hnetpp_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI with stdout redirected to `out`; returns the exit status.
int run(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string(HNETPP_CLI) + " " + args + " > " + out.string() + " 2> " + out.string() + ".err";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace

TEST(Cli, CorruptAtRateZeroIsByteIdentical) {
  for (const char* kind : {"zwnj", "diacritic", "substitution", "reorder"}) {
    for (const char* file : {"synthetic_2k.jsonl", "persian.txt"}) {
      const auto out = scratch() / (std::string(kind) + "_" + file);
      ASSERT_EQ(run(std::string("corrupt --kind ") + kind + " --rate 0 --seed 5 --input " + (kSamples / file).string() +
                        " --output " + out.string(),
                    scratch() / "log"),
                0);
      EXPECT_EQ(slurp(out), slurp(kSamples / file)) << kind << " " << file;
    }
  }
}

TEST(Cli, FullZwnjCorruptionLeavesNoJoiner) {
  const auto out = scratch() / "z1.jsonl";
  ASSERT_EQ(run("corrupt --kind zwnj --rate 1 --input " + (kSamples / "synthetic_2k.jsonl").string() + " --output " +
                    out.string(),
                scratch() / "log"),
            0);
  EXPECT_EQ(slurp(out).find("\xE2\x80\x8C"), std::string::npos);
}

TEST(Cli, EvalSegOnFixture) {
  const auto out = scratch() / "seg.json";
  ASSERT_EQ(run("eval-seg --gold " + (kSamples / "seg_fixture_gold.jsonl").string() + " --predictions " +
                    (kSamples / "seg_fixture_pred.jsonl").string(),
                out),
            0);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_DOUBLE_EQ(j["precision"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["recall"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["f1"].get<double>(), 0.5);
}

TEST(Cli, SegmentAllGatesOnListsEveryOffset) {
  const auto out = scratch() / "segment.jsonl";
  ASSERT_EQ(run("segment --debug-model all-gates-on --config " + (kSamples / "desk.json").string() + " --corpus " +
                    (kSamples / "persian.txt").string(),
                out),
            0);
  std::istringstream lines(slurp(out));
  std::string line;
  std::size_t docs = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto b = j["boundaries"].get<std::vector<std::size_t>>();
    const auto n = j["text"].get<std::string>().size();
    ASSERT_EQ(b.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(b[i], i);
    ++docs;
  }
  EXPECT_EQ(docs, 3u);
}

TEST(Cli, TrainResumeAndEvaluate) {
  const auto dir = scratch() / "run";
  const std::string corpus = (kSamples / "synthetic_2k.jsonl").string();
  const std::string base = "train --quiet --config " + (kSamples / "desk.json").string() + " --corpus " + corpus +
                           " --set train.steps=6 --set train.checkpoint_every=3 --set train.micro_batches=1";
  ASSERT_EQ(run(base + " --out " + dir.string(), scratch() / "train.json"), 0);
  ASSERT_TRUE(fs::exists(dir / "final.ckpt"));
  ASSERT_TRUE(fs::exists(dir / "step_3.ckpt"));
  const auto resumed = scratch() / "resumed";
  ASSERT_EQ(run("train --quiet --resume " + (dir / "step_3.ckpt").string() + " --corpus " + corpus + " --out " +
                    resumed.string(),
                scratch() / "train2.json"),
            0);
  EXPECT_EQ(slurp(dir / "final.ckpt"), slurp(resumed / "final.ckpt"));

  const auto a = scratch() / "bpb_a.json", b = scratch() / "bpb_b.json";
  ASSERT_EQ(run("eval-bpb --checkpoint " + (dir / "final.ckpt").string() + " --corpus " + corpus, a), 0);
  ASSERT_EQ(run("eval-bpb --checkpoint " + (resumed / "final.ckpt").string() + " --corpus " + corpus, b), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_GT(nlohmann::json::parse(slurp(a))["bpb"].get<double>(), 0.0);
}

TEST(Cli, ExitCodes) {
  const auto out = scratch() / "codes";
  EXPECT_EQ(run("", out), 1);
  EXPECT_EQ(run("eval-seg --nope", out), 1);
  EXPECT_EQ(run("corrupt --kind zwnj --rate 2 --input " + (kSamples / "persian.txt").string(), out), 1);
  EXPECT_EQ(run("corrupt --kind smudge --rate 0 --input " + (kSamples / "persian.txt").string(), out), 1);
  EXPECT_EQ(run("segment --debug-model all-gates-on --set model.levelz=2 --corpus " + (kSamples / "persian.txt").string(),
                out),
            1);
  EXPECT_EQ(run("eval-bpb --checkpoint /nonexistent.ckpt --corpus " + (kSamples / "persian.txt").string(), out), 2);
  EXPECT_EQ(run("eval-bpb --checkpoint " + (kSamples / "persian.txt").string() + " --corpus " +
                    (kSamples / "persian.txt").string(),
                out),
            2);
  EXPECT_EQ(run("eval-seg --gold /nonexistent.jsonl --predictions /nonexistent.jsonl", out), 2);
}
