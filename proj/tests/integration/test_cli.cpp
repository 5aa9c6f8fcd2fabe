#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "daug");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = daug::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<char> bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) out.insert(fs::relative(e.path(), dir).string());
  return out;
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / "daug_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "cfg.json") << R"({
      "data": {"image_size": 64, "patch_size": 32, "overlap": 8},
      "style": {"epochs": 2, "batch_size": 1, "steps_per_epoch": 2},
      "daugnet": {"epochs": 1, "batch_size": 2, "steps_per_epoch": 2},
      "predict": {"tile": 32, "overlap": 8}
    })";
  }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

}  // namespace

TEST_CASE("help exits 0") {
  const Result r = run_cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("train-daugnet") != std::string::npos);
}

TEST_CASE("an unknown subcommand fails and names the token") {
  const Result r = run_cli({"frobnicate"});
  CHECK(r.code != 0);
  CHECK(r.err.find("frobnicate") != std::string::npos);
  const Result flag = run_cli({"synth-data", "--bogus"});
  CHECK(flag.code != 0);
  CHECK(flag.err.find("--bogus") != std::string::npos);
}

TEST_CASE("bad inputs are reported before any work") {
  Workspace ws;
  Result r = run_cli({"train-style", "--data", ws / "missing", "--seed", "1", "--out", ws / "s.ckpt"});
  CHECK(r.code != 0);
  CHECK(r.err.find("missing") != std::string::npos);
  REQUIRE(run_cli({"synth-data", "--config", ws / "cfg.json", "--seed", "1", "--out", ws / "data"}).code == 0);
  r = run_cli({"train-style", "--config", ws / "cfg.json", "--data", ws / "data", "--out", ws / "s.ckpt"});
  CHECK(r.code != 0);
  CHECK(r.err.find("--seed") != std::string::npos);
  std::ofstream(ws / "bad.json") << R"({"style": {"epochz": 3}})";
  r = run_cli({"train-style", "--config", ws / "bad.json", "--seed", "1", "--data", ws / "data", "--out", ws / "s.ckpt"});
  CHECK(r.code != 0);
  CHECK(r.err.find("epochz") != std::string::npos);
  r = run_cli({"train-daugnet", "--config", ws / "cfg.json", "--seed", "1", "--checkpoint", ws / "nope.ckpt", "--data",
            ws / "data", "--out", ws / "c.ckpt"});
  CHECK(r.code != 0);
  CHECK_FALSE(fs::exists(ws / "s.ckpt"));
  CHECK_FALSE(fs::exists(ws / "c.ckpt"));
}

TEST_CASE("full synthetic pipeline reports all three classes") {
  Workspace ws;
  const std::string cfg = ws / "cfg.json";
  REQUIRE(run_cli({"synth-data", "--config", cfg, "--seed", "1", "--out", ws / "data"}).code == 0);

  auto before = listing(ws.root);
  Result r = run_cli({"train-style", "--config", cfg, "--seed", "2", "--data", ws / "data", "--out", ws / "s1.ckpt"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  before.insert("s1.ckpt");
  CHECK(listing(ws.root) == before);

  r = run_cli({"train-daugnet", "--config", cfg, "--seed", "3", "--checkpoint", ws / "s1.ckpt", "--data", ws / "data",
            "--diversify-prob", "0.9", "--out", ws / "cls.ckpt"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  before.insert("cls.ckpt");
  CHECK(listing(ws.root) == before);

  r = run_cli({"evaluate", "--config", cfg, "--checkpoint", ws / "cls.ckpt", "--data", ws / "data", "--out",
            ws / "report.json"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::ifstream in(ws / "report.json");
  const auto report = nlohmann::json::parse(in);
  REQUIRE(report["domains"].size() == 3);
  for (const auto& d : report["domains"]) {
    for (const char* c : {"building", "road", "tree"}) {
      REQUIRE(d["classes"].contains(c));
      CHECK(d["classes"][c]["iou"].is_number());
      CHECK(d["classes"][c]["union"].get<long long>() > 0);
    }
  }

  SUBCASE("training reruns are byte-identical") {
    REQUIRE(run_cli({"train-style", "--config", cfg, "--seed", "2", "--data", ws / "data", "--out", ws / "s1b.ckpt"}).code == 0);
    CHECK(bytes(ws / "s1.ckpt") == bytes(ws / "s1b.ckpt"));
    REQUIRE(run_cli({"train-daugnet", "--config", cfg, "--seed", "3", "--checkpoint", ws / "s1.ckpt", "--data",
                  ws / "data", "--diversify-prob", "0.9", "--out", ws / "clsb.ckpt"})
                .code == 0);
    CHECK(bytes(ws / "cls.ckpt") == bytes(ws / "clsb.ckpt"));
  }

  SUBCASE("life-long extension, stylize, predict and standardize") {
    REQUIRE(run_cli({"train-style", "--config", cfg, "--seed", "4", "--data", ws / "data", "--domains", "city_a,city_b",
                  "--no-edge-loss", "--out", ws / "ab.ckpt"})
                .code == 0);
    r = run_cli({"extend-domains", "--config", cfg, "--seed", "5", "--checkpoint", ws / "ab.ckpt", "--data", ws / "data",
              "--domains", "city_c", "--out", ws / "abc.ckpt"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = run_cli({"stylize", "--checkpoint", ws / "abc.ckpt", "--input", ws / "data/city_a/image.ppm", "--domains", "city_c",
              "--out", ws / "fake.ppm"});
    CHECK(r.code == 0);
    CHECK(fs::is_regular_file(ws / "fake.ppm"));
    r = run_cli({"predict", "--config", cfg, "--checkpoint", ws / "cls.ckpt", "--input", ws / "data/city_c/image.ppm",
              "--out", ws / "pred"});
    CHECK(r.code == 0);
    CHECK(listing(ws.root / "pred") == std::set<std::string>{"mask_building.pgm", "mask_road.pgm", "mask_tree.pgm"});
    for (const char* m : {"gray-world", "hist-eq", "hist-match"}) {
      r = run_cli({"standardize", "--method", m, "--input", ws / "data/city_c/image.ppm", "--reference",
                ws / "data/city_a/image.ppm", "--out", ws / (std::string(m) + ".ppm")});
      CHECK_MESSAGE(r.code == 0, r.err);
    }
    r = run_cli({"standardize", "--method", "zscore", "--input", ws / "data/city_c/image.ppm", "--out", ws / "z.dtf"});
    CHECK(r.code == 0);
    r = run_cli({"evaluate", "--config", cfg, "--checkpoint", ws / "cls.ckpt", "--data", ws / "data", "--domains", "city_c",
              "--standardize", "hist-match", "--reference", "city_a", "--out", ws / "hm.json"});
    CHECK_MESSAGE(r.code == 0, r.err);
  }
}
