#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "mofa/core/hash.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result mofa_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mofa");
  std::ostringstream out;
  std::ostringstream err;
  const int code = mofa::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Dataset plus one-epoch checkpoints shared by the tests below.
struct Workspace {
  TempDir root{"cli"};
  fs::path data = root / "data";
  fs::path det = root / "det";
  fs::path mat = root / "mat";

  Workspace() {
    REQUIRE(mofa_cli({"synth", "--identities", "3", "--images-per", "4", "--negatives", "4", "--seed", "5", "--out",
                      data.string()})
                .code == 0);
    REQUIRE(mofa_cli({"train", "--component", "detector", "--data", data.string(), "--out", det.string(),
                      "--epochs", "1"})
                .code == 0);
    REQUIRE(mofa_cli({"train", "--component", "matcher", "--data", data.string(), "--out", mat.string(),
                      "--epochs", "1"})
                .code == 0);
  }

  std::vector<std::string> attack_args(const fs::path& out) const {
    return {"--json", "attack", "--mode", "di", "--detector", det.string(), "--matcher", mat.string(), "--data",
            data.string(), "--source", "id000", "--other", "id001", "--out", out.string(), "--images", "2",
            "--iterations", "3", "--repeats", "1"};
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes a reproducible dataset") {
  TempDir dir("synth");
  const auto a = mofa_cli({"--json", "synth", "--identities", "2", "--images-per", "3", "--seed", "9", "--out",
                           (dir / "a").string()});
  REQUIRE(a.code == 0);
  const auto summary = json::parse(a.out);
  CHECK(summary.at("images") == 6);
  CHECK(summary.at("sha256") == mofa::sha256_tree(dir / "a"));
  const auto b = mofa_cli({"--json", "synth", "--identities", "2", "--images-per", "3", "--seed", "9", "--out",
                           (dir / "b").string()});
  CHECK(json::parse(b.out).at("sha256") == summary.at("sha256"));

  CHECK(mofa_cli({"synth", "--identities", "2", "--out", (dir / "a").string()}).code == mofa::cli::kExitConfig);
  CHECK(mofa_cli({"synth", "--identities", "2", "--out", (dir / "a").string(), "--force"}).code == 0);
  CHECK(mofa_cli({"synth", "--identities", "1", "--out", (dir / "c").string()}).code == mofa::cli::kExitConfig);
}

TEST_CASE("usage errors exit with the config code") {
  CHECK(mofa_cli({}).code == mofa::cli::kExitConfig);
  CHECK(mofa_cli({"bogus"}).code == mofa::cli::kExitConfig);
  CHECK(mofa_cli({"synth"}).code == mofa::cli::kExitConfig);
  CHECK(mofa_cli({"--version"}).code == 0);
}

TEST_CASE("attack, rerun from manifest, evaluate") {
  auto& w = workspace();
  TempDir out("attack");

  const auto first = mofa_cli(w.attack_args(out.path()));
  REQUIRE_MESSAGE(first.code == 0, first.err);
  const auto printed = json::parse(first.out);
  const fs::path run_dir = printed.at("run_dir").get<std::string>();
  for (const char* f : {"report.csv", "report.md", "breakdown.json", "config.txt", "manifest.json"}) {
    CHECK(fs::exists(run_dir / f));
  }
  const auto manifest = json::parse(slurp(run_dir / "manifest.json"));
  CHECK(manifest.at("runs").size() == 2);
  CHECK(manifest.at("config").at("target") == "id001");
  CHECK(manifest.at("detector").at("sha256") == mofa::sha256_tree(w.det));

  const auto again = mofa_cli({"--json", "attack", "--manifest", (run_dir / "manifest.json").string()});
  REQUIRE_MESSAGE(again.code == 0, again.err);
  const fs::path rerun_dir = json::parse(again.out).at("run_dir").get<std::string>();
  CHECK(rerun_dir != run_dir);
  for (const auto& r : manifest.at("runs")) {
    const std::string rel = r.get<std::string>();
    CHECK(slurp(run_dir / rel / "noise.f32") == slurp(rerun_dir / rel / "noise.f32"));
  }
  CHECK(slurp(run_dir / "report.csv") == slurp(rerun_dir / "report.csv"));
  CHECK(slurp(run_dir / "config.txt") == slurp(rerun_dir / "config.txt"));

  const fs::path report = out / "eval.csv";
  const auto ev = mofa_cli({"evaluate", "--runs", (run_dir / "runs").string(), "--gallery",
                            (w.mat / "gallery" / "gallery.json").string(), "--out", report.string()});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  CHECK(slurp(report) == slurp(run_dir / "report.csv"));
  CHECK(fs::exists(out / "eval.breakdown.json"));
  CHECK(mofa_cli({"evaluate", "--runs", (run_dir / "runs").string(), "--gallery",
                  (w.mat / "gallery" / "gallery.json").string(), "--out", (out / "eval.pdf").string()})
            .code == mofa::cli::kExitConfig);
}

TEST_CASE("attack configuration errors") {
  auto& w = workspace();
  TempDir out("attack_err");
  auto args = w.attack_args(out.path());

  SUBCASE("missing target") {
    args.erase(args.begin() + 12, args.begin() + 14);
    const auto r = mofa_cli(args);
    CHECK(r.code == mofa::cli::kExitConfig);
    CHECK(json::parse(r.out).at("ok") == false);
  }
  SUBCASE("out-of-range value") {
    args.push_back("--margin_k");
    args.push_back("1.5");
    CHECK(mofa_cli(args).code == mofa::cli::kExitConfig);
  }
  SUBCASE("unknown identity") {
    args[11] = "id999";
    CHECK(mofa_cli(args).code == mofa::cli::kExitConfig);
  }
  SUBCASE("malformed config file") {
    std::ofstream(out / "bad.txt") << "alpha = 1\nnot a line\n";
    args.push_back("--config");
    args.push_back((out / "bad.txt").string());
    const auto r = mofa_cli(args);
    CHECK(r.code == mofa::cli::kExitConfig);
    CHECK(r.err.find("line 2") != std::string::npos);
  }
  SUBCASE("tampered checkpoint on rerun") {
    const auto first = mofa_cli(args);
    REQUIRE(first.code == 0);
    const fs::path run_dir = json::parse(first.out).at("run_dir").get<std::string>();
    auto m = json::parse(slurp(run_dir / "manifest.json"));
    m["detector"]["sha256"] = "0000";
    std::ofstream(run_dir / "manifest.json") << m.dump();
    CHECK(mofa_cli({"attack", "--manifest", run_dir.string()}).code == mofa::cli::kExitRuntime);
  }
}

}  // TEST_SUITE
