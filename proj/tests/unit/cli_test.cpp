#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli/cli.h"
#include "ldn/error.h"
#include "ldn/image.h"

namespace ldn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out, err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("ldn_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

const std::string kFonts = LDN_TEST_DATA_DIR "/fonts";
const std::string kSample = LDN_TEST_DATA_DIR "/sample";

TEST(Cli, HelpIsSuccess) {
  const Result r = call({"--help"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("train-inpaint"), std::string::npos);
}

TEST(Cli, NoSubcommandIsUsage) { EXPECT_EQ(call({}).code, kUsage); }

TEST(Cli, UnknownFlagIsUsage) {
  EXPECT_EQ(call({"eval", "--no-such-flag", "1"}).code, kUsage);
}

TEST(Cli, MissingTargetNamesTheFlag) {
  const Result r = call({"edit", "--image", kSample + "/scene.png"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("--target"), std::string::npos) << r.err;
}

TEST(Cli, BadFlagValueIsUsage) {
  const Result r = call({"train-inpaint", "--steps", "ten", "--print-config"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("--steps"), std::string::npos);
  EXPECT_EQ(call({"--seed", "-3", "eval", "--print-config"}).code, kUsage);
}

TEST(Cli, PrintConfigIsStable) {
  const std::vector<std::string> args{"--seed", "9", "train-glyph", "--steps", "12",
                                      "--print-config"};
  const Result a = call(args), b = call(args);
  ASSERT_EQ(a.code, kOk);
  EXPECT_EQ(a.out, b.out);
  const json j = json::parse(a.out);
  EXPECT_EQ(j["command"], "train-glyph");
  EXPECT_EQ(j["seed"], 9);
  EXPECT_EQ(j["glyph"]["steps"], 12);
  EXPECT_FALSE(j.contains("inpaint"));
}

TEST(Cli, FlagOverridesConfigFile) {
  const fs::path dir = scratch("config");
  {
    std::ofstream f(dir / "run.toml");
    f << "seed = 5\n[inpaint]\nsteps = 40\nlr = 0.01\n";
  }
  const Result r = call({"--config", (dir / "run.toml").string(), "train-inpaint",
                         "--steps", "7", "--print-config"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["inpaint"]["steps"], 7);
  EXPECT_DOUBLE_EQ(j["inpaint"]["lr"].get<double>(), 0.01);
}

TEST(Cli, UnknownConfigKeyIsUsage) {
  const fs::path dir = scratch("badkey");
  {
    std::ofstream f(dir / "run.toml");
    f << "[inpaint]\nstepz = 40\n";
  }
  const Result r = call({"--config", (dir / "run.toml").string(), "train-inpaint",
                         "--print-config"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("stepz"), std::string::npos) << r.err;
}

TEST(Cli, WorkerCountEnv) {
  ::setenv("LDN_NUM_WORKERS", "1", 1);
  EXPECT_EQ(worker_count(), 1);
  ::setenv("LDN_NUM_WORKERS", "zero", 1);
  EXPECT_THROW(worker_count(), UsageError);
  ::setenv("LDN_NUM_WORKERS", "0", 1);
  EXPECT_THROW(worker_count(), UsageError);
  ::unsetenv("LDN_NUM_WORKERS");
  EXPECT_GE(worker_count(), 1);
}

TEST(Cli, DatasetBuildFromBundledFonts) {
  const fs::path out = scratch("fonts");
  const Result r = call({"--out", out.string(), "dataset", "build", "--fonts", kFonts});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("124 records from 2 fonts"), std::string::npos) << r.out;
  std::ifstream in(out / "manifest.jsonl");
  int lines = 0;
  for (std::string line; std::getline(in, line);) lines += !line.empty();
  EXPECT_EQ(lines, 124);
  EXPECT_EQ(read_json(out / "run.dataset-build.json")["config"]["command"],
            "dataset build");
}

TEST(Cli, RefusesChangedConfigWithoutForce) {
  const fs::path out = scratch("refuse");
  const std::vector<std::string> base{"--out", out.string(), "dataset", "build",
                                      "--backgrounds", "2", "--background-size", "16"};
  ASSERT_EQ(call(base).code, kOk);
  // Same config again is fine.
  EXPECT_EQ(call(base).code, kOk);
  std::vector<std::string> reseeded{"--seed", "77"};
  reseeded.insert(reseeded.end(), base.begin(), base.end());
  const Result r = call(reseeded);
  EXPECT_EQ(r.code, kFailure);
  EXPECT_NE(r.err.find("--force"), std::string::npos) << r.err;
  reseeded.insert(reseeded.begin(), "--force");
  EXPECT_EQ(call(reseeded).code, kOk);
  EXPECT_EQ(read_json(out / "run.dataset-build.json")["config"]["seed"], 77);
}

TEST(Cli, InpaintFailureNamesStage) {
  const fs::path data = scratch("corrupt");
  std::ofstream(data / "a.png") << "not a png";
  const fs::path out = scratch("corrupt_out");
  const Result r = call({"--out", out.string(), "train-inpaint", "--data",
                         data.string(), "--steps", "1"});
  EXPECT_EQ(r.code, kFailure);
  EXPECT_NE(r.err.find("background_restorer"), std::string::npos) << r.err;
}

TEST(Cli, MissingDataPathIsUsage) {
  const Result r = call({"--out", scratch("nodata").string(), "train-inpaint",
                         "--data", "/nonexistent/ldn"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("--data"), std::string::npos);
}

TEST(Cli, EvalWritesSummaryAndMetrics) {
  const fs::path pred = scratch("pred"), ref = scratch("ref"), out = scratch("eval");
  write_png(Image(16, 16, 3, 0.25), pred / "x.png");
  write_png(Image(16, 16, 3, 0.25), ref / "x.png");
  const Result r = call({"--out", out.string(), "eval", "--pred", pred.string(),
                         "--ref", ref.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(out / "summary.txt"));
  std::ifstream in(out / "metrics.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  const json m = json::parse(line);
  EXPECT_EQ(m["name"], "l1");
  EXPECT_EQ(m["value"], 0.0);
  EXPECT_EQ(m["sample"], "x.png");
}

TEST(Cli, EvalMissingPredictionFails) {
  const fs::path pred = scratch("pred2"), ref = scratch("ref2");
  write_png(Image(16, 16, 3, 0.25), ref / "x.png");
  const Result r = call({"--out", scratch("eval2").string(), "eval", "--pred",
                         pred.string(), "--ref", ref.string()});
  EXPECT_EQ(r.code, kFailure);
  EXPECT_NE(r.err.find("eval_harness"), std::string::npos) << r.err;
}

// Trains deliberately tiny models through the CLI, then edits the bundled
// sample with them.
TEST(Cli, EditSmokeRun) {
  const fs::path work = scratch("smoke");
  const std::string ckpt = (work / "ckpt").string();
  const std::string bg = (work / "bg").string();
  const std::string glyphs = (work / "glyphs").string();

  Result r = call({"--out", bg, "dataset", "build", "--backgrounds", "4",
                   "--background-size", "32"});
  ASSERT_EQ(r.code, kOk) << r.err;
  r = call({"--out", glyphs, "dataset", "build", "--fonts", kFonts, "--color",
            "--size", "16"});
  ASSERT_EQ(r.code, kOk) << r.err;
  r = call({"--out", ckpt, "train-inpaint", "--data", bg, "--steps", "2",
            "--batch-size", "2", "--input-size", "32", "--hole-size", "16",
            "--latent-dim", "8", "--base-channels", "4", "--max-channels", "8",
            "--disc-channels", "4"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(ckpt) / "inpaint" / "losses.jsonl"));
  r = call({"--out", ckpt, "train-glyph", "--data", glyphs, "--steps", "2",
            "--batch-size", "2", "--base-channels", "4", "--depth", "2",
            "--disc-channels", "4"});
  ASSERT_EQ(r.code, kOk) << r.err;
  r = call({"--out", ckpt, "train-glyph", "--stage", "finetune", "--data", glyphs,
            "--steps", "2", "--batch-size", "2", "--disc-channels", "4",
            "--orna-hidden", "8"});
  ASSERT_EQ(r.code, kOk) << r.err;

  const json sample = read_json(fs::path(kSample) / "scene.json");
  const auto& b = sample["word_box"];
  const std::string box = std::to_string(b[0].get<int>()) + "," +
                          std::to_string(b[1].get<int>()) + "," +
                          std::to_string(b[2].get<int>()) + "," +
                          std::to_string(b[3].get<int>());
  const fs::path out_png = work / "OUT.png", audit = work / "audit.json";
  const std::vector<std::string> args{
      "--out", out_png.string(), "edit", "--image", kSample + "/scene.png",
      "--box", box, "--char-boxes", kSample + "/scene.json", "--source",
      sample["text"].get<std::string>(), "--target", "SOLD", "--ckpt-dir", ckpt,
      "--audit", audit.string(), "--adapt-steps", "2"};
  r = call(args);
  ASSERT_EQ(r.code, kOk) << r.err;
  const Image in = read_png(kSample + "/scene.png");
  const Image edited = read_png(out_png);
  EXPECT_TRUE(edited.same_shape(in));
  const json a = read_json(audit);
  EXPECT_EQ(a["config"]["edit"]["target"], "SOLD");
  EXPECT_EQ(a["config_hash"].get<std::string>().size(), 64u);

  // Editing again with a different target must not clobber the audit.
  std::vector<std::string> other = args;
  *std::find(other.begin(), other.end(), "SOLD") = "SALT";
  r = call(other);
  EXPECT_EQ(r.code, kFailure);
  EXPECT_NE(r.err.find("--force"), std::string::npos);

  // A checkpoint directory without models fails in the restorer stage.
  const fs::path empty = scratch("empty_ckpt");
  std::vector<std::string> bad = args;
  *std::find(bad.begin(), bad.end(), ckpt) = empty.string();
  *std::find(bad.begin(), bad.end(), audit.string()) = (work / "audit2.json").string();
  r = call(bad);
  EXPECT_EQ(r.code, kFailure);
  EXPECT_NE(r.err.find("background_restorer"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace ldn::cli
