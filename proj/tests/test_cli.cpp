// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "endomim_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

/// Runs the CLI with stdout and stderr captured to `log`; returns the exit status.
int run(const std::string& args, const std::string& log = "last.log") {
  const std::string cmd = std::string(ENDOMIM_CLI) + " " + args + " > " + (workdir() / log).string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

const std::string& corpus() {
  static const std::string dir = [] {
    const auto d = at("corpus");
    EXPECT_EQ(run("synth --seed 0 --videos 8 --frames 3 --val-videos 2 --test-videos 2 --out " + d), 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, SynthIsReproducible) {
  const auto other = at("corpus_again");
  ASSERT_EQ(run("synth --seed 0 --videos 8 --frames 3 --val-videos 2 --test-videos 2 --out " + other), 0);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(corpus())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), corpus());
    ASSERT_TRUE(fs::exists(fs::path(other) / rel)) << rel;
    EXPECT_EQ(slurp(entry.path()), slurp(fs::path(other) / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 8u * 3u + 3u);  // frames, two manifests, provenance
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("transmogrify"), 2);
  EXPECT_EQ(run("synth --out x --no-such-flag"), 2);
  EXPECT_EQ(run("pretrain --out x"), 2);
}

TEST(Cli, LeakageExitsOneNamingVideos) {
  // The downstream manifest itself holds val/test videos.
  EXPECT_EQ(run("pretrain --manifest " + corpus() + "/manifest.jsonl --out " + at("leak.ckpt"), "leak.log"), 1);
  const auto log = slurp(workdir() / "leak.log");
  EXPECT_NE(log.find("video006"), std::string::npos) << log;
  EXPECT_NE(log.find("video007"), std::string::npos) << log;
  EXPECT_FALSE(fs::exists(at("leak.ckpt")));
}

TEST(Cli, ConfigViolationExitsOneNamingInvariant) {
  std::ofstream(at("bad.json")) << R"({"batch_size": 0})";
  EXPECT_EQ(run("synth --config " + at("bad.json") + " --out " + at("unused"), "bad.log"), 1);
  EXPECT_NE(slurp(workdir() / "bad.log").find("batch_size must be >= 1"), std::string::npos);
  std::ofstream(at("unknown.json")) << R"({"batch_sise": 4})";
  EXPECT_EQ(run("synth --config " + at("unknown.json") + " --out " + at("unused"), "unknown.log"), 1);
  EXPECT_NE(slurp(workdir() / "unknown.log").find("batch_sise"), std::string::npos);
}

TEST(Cli, FlagsOverrideConfigFile) {
  std::ofstream(at("seed.json")) << R"({"seeds": [7], "mask_ratio": 0.5})";
  ASSERT_EQ(run("synth --config " + at("seed.json") + " --seed 3 --videos 4 --frames 1 --val-videos 1 --test-videos 1 --out " + at("over")), 0);
  const auto prov = nlohmann::json::parse(slurp(workdir() / "over" / "run.json"));
  EXPECT_EQ(prov["seed"], 3);
  EXPECT_EQ(prov["run_config"]["mask_ratio"], 0.5);
}

TEST(Cli, FinetuneThenEvaluateTwiceIsByteIdentical) {
  const auto manifest = corpus() + "/manifest.jsonl";
  const auto ckpt = at("phase.ckpt");
  ASSERT_EQ(run("finetune --task phase-stage1 --init-mode random --epochs 1 --seed 1 --manifest " + manifest + " --out " + ckpt), 0)
      << slurp(workdir() / "last.log");
  EXPECT_TRUE(fs::exists(ckpt + ".run.json"));
  EXPECT_TRUE(fs::exists(ckpt + ".log.jsonl"));
  ASSERT_EQ(run("evaluate --checkpoint " + ckpt + " --manifest " + manifest + " --out " + at("r1.jsonl")), 0);
  ASSERT_EQ(run("evaluate --checkpoint " + ckpt + " --manifest " + manifest + " --out " + at("r2.jsonl")), 0);
  const auto a = slurp(workdir() / "r1.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(workdir() / "r2.jsonl"));
  EXPECT_NE(a.find("\"single_run\":true"), std::string::npos);
  // A phase checkpoint is not an MAE model.
  EXPECT_EQ(run("render-recon --checkpoint " + ckpt + " --manifest " + manifest + " --out " + at("render")), 1);
}

TEST(Cli, IngestSamplesOneFpsAndDropsSyntheticFrames) {
  // 5 fps source: seconds 0.0 .. 2.0 in steps of 0.2 -> one frame per whole second.
  const auto root = workdir() / "raw";
  fs::create_directories(root / "clip");
  const auto frame = fs::path(corpus()) / "video000" / "0.png";
  for (int i = 0; i <= 10; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%.1f.png", 0.2 * i);
    fs::copy_file(frame, root / "clip" / name, fs::copy_options::overwrite_existing);
  }
  ASSERT_EQ(run("ingest --root " + root.string() + " --dataset real --fps 5 --out " + at("real.jsonl")), 0) << slurp(workdir() / "last.log");
  std::size_t lines = 0;
  {
    std::ifstream in(at("real.jsonl"));
    for (std::string line; std::getline(in, line);) ++lines;
  }
  EXPECT_EQ(lines, 3u);
  // The same frames marked synthetic are filtered; earlier records survive.
  ASSERT_EQ(run("ingest --root " + root.string() + " --dataset gen --synthetic --manifest " + at("real.jsonl") + " --out " + at("merged.jsonl")), 0);
  EXPECT_EQ(slurp(workdir() / "merged.jsonl"), slurp(workdir() / "real.jsonl"));
  EXPECT_TRUE(fs::exists(at("merged.jsonl.run.json")));
}

TEST(Cli, PretrainThenRenderGrids) {
  const auto ckpt = at("mae.ckpt");
  ASSERT_EQ(run("pretrain --epochs 1 --manifest " + corpus() + "/pretrain.jsonl --downstream " + corpus() + "/manifest.jsonl --out " + ckpt), 0)
      << slurp(workdir() / "last.log");
  ASSERT_EQ(run("render-recon --checkpoint " + ckpt + " --manifest " + corpus() + "/manifest.jsonl --limit 1 --mask-seeds 0 1 --out " +
                at("grids")),
            0)
      << slurp(workdir() / "last.log");
  EXPECT_TRUE(fs::exists(workdir() / "grids" / "video006_0.png"));
  EXPECT_TRUE(fs::exists(workdir() / "grids" / "video006_0.losses.tsv"));
  EXPECT_TRUE(fs::exists(workdir() / "grids" / "run.json"));
}
