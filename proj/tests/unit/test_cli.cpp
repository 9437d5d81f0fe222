#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "medeval/cli.hpp"
#include "testkit.hpp"

using namespace medeval;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json read_json(const std::filesystem::path& p) { return json::parse(read_file(p)); }

}  // namespace

TEST_CASE("unknown commands are usage errors", "[cli]") {
  const auto r = run({"frobnicate", "--x"});
  CHECK(r.code == 2);
  const auto e = json::parse(r.err);
  CHECK(e["error"] == "UnknownCommand");
  CHECK(e["detail"]["command"] == "frobnicate");
  CHECK(r.out.empty());

  const auto missing = run({"fit"});
  CHECK(missing.code == 2);
  CHECK(json::parse(missing.err).contains("error"));
}

TEST_CASE("pipeline errors exit 1 with JSON on stderr", "[cli]") {
  testkit::TempDir dir("cli");
  const auto r = run({"ingest", "--qa", (dir / "absent.jsonl").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 1);
  CHECK(json::parse(r.err)["error"] == "FileNotFound");
}

TEST_CASE("demo output feeds evaluate and fit", "[cli]") {
  testkit::TempDir dir("cli");
  const auto demo = run({"--seed", "3", "demo", "--out", (dir / "demo").string()});
  REQUIRE(demo.code == 0);
  const auto summary = read_json(dir / "demo" / "summary.json");
  CHECK(summary["seed"] == 3);
  CHECK(summary["provenance"]["seed"] == 3);

  const auto ev = run({"evaluate", "--scores", (dir / "demo" / "metrics" / "scored.jsonl").string(), "--annotations",
                       (dir / "demo" / "metrics" / "annotations.jsonl").string(), "--out",
                       (dir / "report.json").string(), "--tables", (dir / "tables.csv").string()});
  REQUIRE(ev.code == 0);
  const auto report = read_json(dir / "report.json");
  for (const auto* key : {"acc_2tuple", "acc_triple", "spearman", "pearson", "n_cases", "n_pairs", "icc",
                          "krippendorff_alpha", "t_test", "win_tie_loss", "provenance"}) {
    CAPTURE(key);
    CHECK(report.contains(key));
    CHECK_FALSE(report[key].is_null());
  }
  CHECK(report["provenance"]["command"] == "evaluate");
  CHECK(report["provenance"].contains("config_sha256"));
  CHECK(std::filesystem::file_size(dir / "tables.csv") > 0);

  const auto fit = run({"fit", "--points", (dir / "demo" / "fit" / "iterations.csv").string(), "--mode", "full",
                        "--horizon", "6", "--out", (dir / "fit.json").string()});
  REQUIRE(fit.code == 0);
  CHECK(read_json(dir / "fit.json")["forecast"]["values"].size() == 7);
}

TEST_CASE("fit with the published constants", "[cli]") {
  testkit::TempDir dir("cli");
  write_file_atomic(dir / "p.csv", "t,accuracy\n0,44.61\n1,47.13\n2,48.65\n");
  const auto r = run({"fit", "--points", (dir / "p.csv").string(), "--mode", "fixed"});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(std::abs(j["a"].get<double>() - 0.526) <= 0.002);
}
