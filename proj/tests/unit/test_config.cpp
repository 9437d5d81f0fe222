#include <catch2/catch_amalgamated.hpp>

#include "medeval/config.hpp"
#include "testkit.hpp"

using namespace medeval;
using namespace medeval::config;

namespace {

std::optional<std::string> no_env(const std::string&) { return std::nullopt; }

// Returns the detail key of the ConfigError thrown by f.
std::string config_error_key(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::ConfigError);
    return e.detail().value("key", std::string{});
  }
  FAIL("no error thrown");
  return {};
}

}  // namespace

TEST_CASE("defaults resolve every typed view", "[config]") {
  const auto c = PipelineConfig::defaults(no_env);
  CHECK(c.seed() == 7);
  CHECK(c.chunk_window() == 512);
  CHECK(c.chunk_overlap() == 64);
  CHECK(c.chain().max_rounds == 5);
  CHECK(c.chain().top_k == 3);
  CHECK(c.chain().token_budget == 2048);
  CHECK(c.classifier().c_grid == std::vector<double>{0.01, 0.1, 1, 10, 100});
  CHECK(c.review().lease_ms == 30 * 60 * 1000);
  CHECK(c.review().reviews_required == 1);
  CHECK(c.metrics().icc_variant == metrics::IccVariant::Average);
  CHECK(c.introspection().mode == introspection::CorrectnessMode::RankMismatch);
  CHECK_FALSE(c.backend(gateway::Role::Judge).has_value());
}

TEST_CASE("INI values override defaults", "[config]") {
  const auto c = PipelineConfig::parse(
      "[pipeline]\nseed = 11\n[chain]\nmax_rounds = 3\nmarker = loose\n"
      "[backend.judge]\nendpoint = http://127.0.0.1:9/v1/chat/completions\nmodel = m\ntoken_env = JUDGE_TOKEN\n"
      "[metrics]\nicc = single\n",
      no_env);
  CHECK(c.seed() == 11);
  CHECK(c.chain().max_rounds == 3);
  CHECK(c.chain().marker == chain::MarkerMode::LooseSubstring);
  const auto judge = c.require_backend(gateway::Role::Judge);
  CHECK(judge.kind == "http");
  CHECK(judge.model == "m");
  CHECK(judge.token_env == "JUDGE_TOKEN");
  CHECK(c.metrics().icc_variant == metrics::IccVariant::Single);
}

TEST_CASE("errors name the offending key", "[config]") {
  const auto c = PipelineConfig::defaults(no_env);
  CHECK(config_error_key([&] { c.require_backend(gateway::Role::Evaluator); }) == "backend.evaluator.endpoint");
  CHECK(config_error_key([] { PipelineConfig::parse("[chain]\nmax_round = 3\n", no_env); }) == "chain.max_round");
  CHECK(config_error_key([] { PipelineConfig::parse("[nonsense]\na = 1\n", no_env); }) == "nonsense");
  CHECK(config_error_key([] { PipelineConfig::parse("[chain]\nmax_rounds = many\n", no_env).chain(); }) ==
        "chain.max_rounds");
  CHECK(config_error_key([] { PipelineConfig::parse("[backend.judge]\nkind = script\n", no_env).backend(gateway::Role::Judge); }) ==
        "backend.judge.script_path");
  CHECK(config_error_key([] { PipelineConfig::parse("[metrics]\ntie_mode = fuzzy\n", no_env).metrics(); }) ==
        "metrics.tie_mode");
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/medeval.ini", no_env), Error);
}

TEST_CASE("environment overrides", "[config]") {
  const EnvLookup env = [](const std::string& name) -> std::optional<std::string> {
    if (name == "MEDEVAL_BACKEND_JUDGE_ENDPOINT") return "http://10.0.0.1:8000/v1/chat/completions";
    if (name == "MEDEVAL_PIPELINE_SEED") return "99";
    return std::nullopt;
  };
  const auto c = PipelineConfig::parse("[pipeline]\nseed = 11\n", env);
  CHECK(c.seed() == 99);
  CHECK(c.require_backend(gateway::Role::Judge).endpoint == "http://10.0.0.1:8000/v1/chat/completions");

  const EnvLookup short_form = [](const std::string& name) -> std::optional<std::string> {
    if (name == "MEDEVAL_EVALUATOR_ENDPOINT") return "http://short:1/v1/chat/completions";
    if (name == "MEDEVAL_JUDGE_ENDPOINT") return "http://short:2/v1/chat/completions";
    if (name == "MEDEVAL_BACKEND_JUDGE_ENDPOINT") return "http://long:3/v1/chat/completions";
    return std::nullopt;
  };
  const auto d = PipelineConfig::defaults(short_form);
  const auto evaluator = d.require_backend(gateway::Role::Evaluator);
  CHECK(evaluator.endpoint == "http://short:1/v1/chat/completions");
  CHECK(evaluator.token_env == "MEDEVAL_EVALUATOR_TOKEN");
  CHECK(d.require_backend(gateway::Role::Judge).endpoint == "http://long:3/v1/chat/completions");
}

TEST_CASE("hash is stable and sensitive", "[config]") {
  const auto a = PipelineConfig::parse("[pipeline]\nseed = 7\n", no_env);
  const auto b = PipelineConfig::defaults(no_env);
  const auto c = PipelineConfig::parse("[pipeline]\nseed = 8\n", no_env);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 64);
  CHECK(a.to_json()["pipeline"]["seed"] == "7");
}

TEST_CASE("load reads a file", "[config]") {
  testkit::TempDir dir("cfg");
  write_file_atomic(dir / "m.ini", "[knowledge]\nwindow = 128\noverlap = 16\n");
  const auto c = PipelineConfig::load(dir / "m.ini", no_env);
  CHECK(c.chunk_window() == 128);
  CHECK(c.chunk_overlap() == 16);
}
