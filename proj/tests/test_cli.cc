#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "donning/cli.h"
#include "donning/trainer.h"

using namespace donning;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run Cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void Spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("donning_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Ten-step episodes on a coarse sleeve so a whole train/eval cycle takes
// seconds.
const char* kTinyConfig = R"({
  "experiment_id": "tiny",
  "seed": 11,
  "garment": {"sleeve": {"rings": 6, "segments": 8}},
  "episode": {"horizon": 10, "warmup": 0.1},
  "trainer": {"samples_per_iter": 20, "iterations": 3, "hidden": [8], "checkpoint_every": 1},
  "eval": {"episodes": 3}
})";

}  // namespace

TEST_CASE("exit codes") {
  CHECK(Cli({"--help"}).code == kExitOk);
  CHECK(Cli({"--help"}).out.find("train") != std::string::npos);
  CHECK(Cli({}).code == kExitUsage);
  CHECK(Cli({"dance"}).code == kExitUsage);
  CHECK(Cli({"train", "--bogus"}).code == kExitUsage);
  CHECK(Cli({"eval", "--config", "/nowhere/cfg.json", "--zero"}).code == kExitUsage);
  CHECK(Cli({"gen-garment"}).code == kExitUsage);

  const fs::path dir = Scratch("codes");
  Spit(dir / "bad.json", "{\n  \"seed\": 1,\n  \"episode\": {\"horizon\": \"long\"}\n}\n");
  const Run bad = Cli({"train", "--config", (dir / "bad.json").string()});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("bad.json:3:") != std::string::npos);

  Spit(dir / "nogarment.json", "{\"garment\": {\"obj\": \"missing.obj\"}}");
  CHECK(Cli({"eval", "--config", (dir / "nogarment.json").string(), "--zero"}).code ==
        kExitUsage);
  // Nothing is written for a configuration that fails to build.
  CHECK(!fs::exists("runs/experiment/eval"));

  CHECK(Cli({"eval", "--zero", "--episodes", "0"}).code == kExitUsage);
  CHECK(Cli({"eval", "--out", dir.string()}).code == kExitUsage);

  Spit(dir / "junk.ckpt", "this is not a checkpoint");
  CHECK(Cli({"eval", "--checkpoint", (dir / "junk.ckpt").string()}).code == kExitIncompatible);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint from a different horizon is incompatible") {
  const fs::path dir = Scratch("horizon");
  Spit(dir / "tiny.json", kTinyConfig);
  REQUIRE(Cli({"train", "--config", (dir / "tiny.json").string(), "--out", (dir / "a").string(),
               "--iters", "1"})
              .code == kExitOk);
  const fs::path ckpt = dir / "a" / "checkpoints" / "final.ckpt";
  CHECK(Cli({"eval", "--config", (dir / "tiny.json").string(), "--out", (dir / "a").string(),
             "--checkpoint", ckpt.string()})
            .code == kExitOk);
  // Default config: 400-step episodes.
  CHECK(Cli({"eval", "--out", (dir / "b").string(), "--checkpoint", ckpt.string()}).code ==
        kExitIncompatible);
  Spit(dir / "junk.ckpt", "DNCK but nothing else");
  CHECK(Cli({"train", "--config", (dir / "tiny.json").string(), "--out", (dir / "c").string(),
             "--resume", (dir / "junk.ckpt").string()})
            .code == kExitIncompatible);
  CHECK(Cli({"train", "--config", (dir / "tiny.json").string(), "--out", (dir / "c").string(),
             "--resume", (dir / "missing.ckpt").string()})
            .code == kExitUsage);
  fs::remove_all(dir);
}

TEST_CASE("repeated train and eval runs write identical bytes") {
  const fs::path dir = Scratch("determinism");
  Spit(dir / "tiny.json", kTinyConfig);
  const std::string cfg = (dir / "tiny.json").string();
  for (const char* run : {"r1", "r2"}) {
    const std::string out = (dir / run).string();
    const Run t = Cli({"train", "--config", cfg, "--out", out});
    REQUIRE_MESSAGE(t.code == kExitOk, t.err);
    const Run e = Cli({"eval", "--config", cfg, "--out", out, "--random", "--zero",
                       "--checkpoint", out + "/checkpoints/final.ckpt"});
    REQUIRE_MESSAGE(e.code == kExitOk, e.err);
  }
  const std::vector<std::string> files = {
      "curves/learning_curve.csv", "checkpoints/final.ckpt",    "eval/summary.csv",
      "eval/final_curves.csv",     "eval/final_episodes.csv",   "eval/random_curves.csv",
      "eval/random_episodes.csv",  "eval/zero_episodes.csv",    "manifest.json"};
  for (const std::string& f : files) {
    CAPTURE(f);
    CHECK(Slurp(dir / "r1" / f) == Slurp(dir / "r2" / f));
  }
  std::istringstream curve(Slurp(dir / "r1" / "curves" / "learning_curve.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(curve, line)) ++rows;
  CHECK(rows == 3);
  CHECK(fs::exists(dir / "r1" / "checkpoints" / "iter_000002.ckpt"));

  const nlohmann::json m = nlohmann::json::parse(Slurp(dir / "r1" / "eval" / "manifest.json"));
  CHECK(m["command"] == "eval");
  CHECK(m["seeds"].size() == 3);
  CHECK(m["details"]["policies"].size() == 3);
  fs::remove_all(dir);
}

TEST_CASE("resuming continues the same run") {
  const fs::path dir = Scratch("resume");
  Spit(dir / "tiny.json", kTinyConfig);
  const std::string cfg = (dir / "tiny.json").string();
  const std::string straight = (dir / "straight").string(), split = (dir / "split").string();
  REQUIRE(Cli({"train", "--config", cfg, "--out", straight}).code == kExitOk);
  REQUIRE(Cli({"train", "--config", cfg, "--out", split, "--iters", "2"}).code == kExitOk);
  const Run r = Cli({"train", "--config", cfg, "--out", split, "--iters", "1", "--resume",
                     split + "/checkpoints/iter_000002.ckpt"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  CHECK(r.out.rfind("iter 2 ", 0) == 0);
  CHECK(Slurp(dir / "straight" / "curves" / "learning_curve.csv") ==
        Slurp(dir / "split" / "curves" / "learning_curve.csv"));
  // The checkpoints differ only in the echoed iteration count.
  const Checkpoint a = LoadCheckpoint(straight + "/checkpoints/final.ckpt");
  const Checkpoint b = LoadCheckpoint(split + "/checkpoints/final.ckpt");
  CHECK(a.next_iteration == 3);
  CHECK(b.next_iteration == 3);
  CHECK(a.policy.params() == b.policy.params());
  CHECK(a.baseline.weights() == b.baseline.weights());
  const nlohmann::json m = nlohmann::json::parse(Slurp(dir / "split" / "manifest.json"));
  CHECK(m["details"]["first_iteration"] == 2);
  fs::remove_all(dir);
}

TEST_CASE("gen-garment and export-frames") {
  const fs::path dir = Scratch("garment");
  const Run g = Cli({"gen-garment", "--out", (dir / "g" / "sleeve").string(), "--rings", "5",
                     "--segments", "6"});
  REQUIRE_MESSAGE(g.code == kExitOk, g.err);
  CHECK(g.out.find("30 vertices") != std::string::npos);
  CHECK(fs::exists(dir / "g" / "sleeve.obj"));
  CHECK(fs::exists(dir / "g" / "sleeve.feature.json"));

  Spit(dir / "cfg.json", R"({"garment": {"obj": "g/sleeve.obj"}, "episode": {"horizon": 5,
        "warmup": 0.1}, "trainer": {"samples_per_iter": 5}})");
  const Run f = Cli({"export-frames", "--config", (dir / "cfg.json").string(), "--out",
                     (dir / "x").string(), "--random"});
  REQUIRE_MESSAGE(f.code == kExitOk, f.err);
  CHECK(f.out.find("wrote 6 frames") != std::string::npos);
  CHECK(fs::exists(dir / "x" / "frames" / "random_episode_0.dnfr"));
  fs::remove_all(dir);
}
