#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "medeval/chain.hpp"
#include "testkit.hpp"

using namespace medeval;
using namespace medeval::chain;
using medeval::gateway::Gateway;
using medeval::gateway::Role;
using medeval::gateway::ScriptedStub;

namespace {

struct Kb {
  knowledge::HashEmbedder embedder{64};
  knowledge::VectorIndex index;
  Kb() {
    index = knowledge::VectorIndex::build(
        {{"drugs.txt", {0, 8}, "Trandolapril is an ACE inhibitor used for high blood pressure."},
         {"drugs.txt", {8, 16}, "Verapamil is a calcium channel blocker."},
         {"brain.txt", {0, 8}, "A cavernoma is a cluster of abnormal blood vessels in the brain."}},
        embedder);
  }
};

const std::string kEval = "Analyze:\nStep 1: Both answer.\nScore: Doctor 1: 5 points. Doctor 2: 3 points.";

ParseFailure failure_of(std::string_view text, std::size_t n) {
  try {
    parse_evaluation(text, n);
  } catch (const EvaluationParseError& e) {
    return e.reason();
  }
  FAIL("expected a parse failure for: " << text);
  return ParseFailure::NoSteps;
}

}  // namespace

TEST_CASE("query detection", "[chain]") {
  CHECK(detect_query("[Question] What is cavernoma?", MarkerMode::StrictBracket) == "What is cavernoma?");
  CHECK(detect_query("Thinking...\n  [Question] dose of x\nmore", MarkerMode::StrictBracket) == "dose of x");
  CHECK_FALSE(detect_query("The patient's question is unclear", MarkerMode::StrictBracket));
  CHECK(detect_query("The patient's question is unclear", MarkerMode::LooseSubstring) ==
        "The patient's question is unclear");
  CHECK_FALSE(detect_query("nothing here", MarkerMode::LooseSubstring));
  CHECK_FALSE(detect_query("[Question]   ", MarkerMode::StrictBracket));
}

TEST_CASE("parse_evaluation examples", "[chain]") {
  const auto r = parse_evaluation("Analyze: Step 1: ok. Score: Doctor 1: 5 points.", 1);
  CHECK(r.steps == std::vector<std::string>{"ok."});
  CHECK(r.scores == std::vector<int>{5});
  CHECK(failure_of("Analyze: Step 1: x. Score: Doctor 1: 5 points. Doctor 1: 4 points.", 2) == ParseFailure::DuplicateDoctor);
  CHECK(failure_of("Analyze: Step 1: x. Score: Doctor 1: 5 points.", 2) == ParseFailure::MissingDoctor);
  CHECK(failure_of("Analyze: Step 1: x. Score: Doctor 3: 5 points.", 2) == ParseFailure::UnknownDoctor);
  CHECK(failure_of("Analyze: Step 1: x. Score: Doctor 1: 0 points.", 1) == ParseFailure::ScoreOutOfRange);
  CHECK(failure_of("Analyze: Step 1: x. Score: Doctor 1: 3.5 points.", 1) == ParseFailure::MalformedScoreEntry);
  CHECK(failure_of("Analyze: Step 1: x. Doctor 1: 3 points.", 1) == ParseFailure::MissingScoreSection);
  CHECK(failure_of("Analyze: Score: Doctor 1: 3 points.", 1) == ParseFailure::NoSteps);
  CHECK(failure_of("Analyze: Step 1: x. Score: Doctor 1: 3 points. Overall good.", 1) == ParseFailure::MalformedScoreEntry);
}

TEST_CASE("golden fixtures", "[chain]") {
  std::ifstream in(testkit::fixture_dir() / "parser_golden.json");
  const auto fixtures = nlohmann::json::parse(in);
  REQUIRE(fixtures.size() == 30);
  for (const auto& f : fixtures) {
    INFO(f["name"].get<std::string>());
    const auto text = f["text"].get<std::string>();
    const auto n = f["n_responses"].get<std::size_t>();
    if (f.contains("error")) {
      CHECK(to_string(failure_of(text, n)) == f["error"].get<std::string>());
      continue;
    }
    const auto r = parse_evaluation(text, n);
    CHECK(r.scores == f["scores"].get<std::vector<int>>());
    CHECK(r.steps == f["steps"].get<std::vector<std::string>>());
    CHECK(r.raw_text == text);
  }
}

TEST_CASE("property: format then parse is the identity", "[chain]") {
  DeterministicRng rng(21);
  for (int i = 0; i < 300; ++i) {
    const auto sample = testkit::random_evaluation(rng);
    INFO(sample.text);
    const auto parsed = parse_evaluation(sample.text, sample.expected.scores.size());
    CHECK(parsed.scores == sample.expected.scores);
    CHECK(parsed.steps == sample.expected.steps);
    const auto again = parse_evaluation(format_evaluation(parsed), parsed.scores.size());
    CHECK(again.scores == parsed.scores);
    CHECK(again.steps == parsed.steps);
  }
}

TEST_CASE("render_prompt", "[chain]") {
  const auto c = testkit::make_case("What is trandolapril?", 2);
  const auto p0 = render_prompt(c, {}, default_template());
  CHECK(p0.text.find("Patient's question: What is trandolapril?") != std::string::npos);
  CHECK(p0.text.find("Doctor 2: Answer 2") != std::string::npos);
  CHECK(p0.text.find("Reference answer: Reference answer for") != std::string::npos);
  CHECK(p0.text.find("{{") == std::string::npos);
  CHECK(p0.text == render_prompt(c, {}, default_template()).text);
  CHECK(p0.approx_tokens > 0);

  std::vector<ChainRound> prior{{"[Question] trandolapril", "trandolapril", {{1, "drugs.txt", 0.9, "ACE inhibitor text"}}, 0}};
  const auto p1 = render_prompt(c, prior, default_template());
  CHECK(p1.text.find("ACE inhibitor text") != std::string::npos);
  CHECK(p1.text.find("[Question] trandolapril") != std::string::npos);
  CHECK(p1.approx_tokens > p0.approx_tokens);

  CHECK_THROWS_MATCHES(render_prompt(c, {}, "{{question}} {{responses}} {{reference}}"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::MissingSlot; }));
}

TEST_CASE("chain: immediate evaluation", "[chain]") {
  Kb kb;
  Gateway gw(1);
  auto stub = ScriptedStub::of({kEval});
  gw.set_backend(Role::Evaluator, stub);
  const auto res = run_chain(testkit::make_case("q", 2), &kb.index, &kb.embedder, gw, ChainConfig{});
  CHECK(res.trace.rounds.size() == 1);
  CHECK(res.trace.retrievals() == 0);
  CHECK(res.trace.outcome == ChainOutcome::Evaluated);
  CHECK(res.evaluation.scores == std::vector<int>{5, 3});
  CHECK(stub->requests().size() == 1);
  CHECK(stub->requests()[0].params.temperature == 0.0);
}

TEST_CASE("chain: one query then an evaluation", "[chain]") {
  Kb kb;
  Gateway gw(1);
  auto stub = ScriptedStub::of({"[Question] trandolapril ACE inhibitor", kEval});
  gw.set_backend(Role::Evaluator, stub);
  ChainConfig cfg;
  cfg.top_k = 1;
  const auto res = run_chain(testkit::make_case("q", 2), &kb.index, &kb.embedder, gw, cfg);
  REQUIRE(stub->requests().size() == 2);
  CHECK(res.trace.retrievals() == 1);
  REQUIRE(res.trace.rounds[0].retrieved.size() == 1);
  CHECK(res.trace.rounds[0].retrieved[0].chunk_id == 0);
  CHECK(stub->requests()[1].messages.back().text.find("Trandolapril is an ACE inhibitor") != std::string::npos);
  CHECK(stub->requests()[0].messages.back().text.find("Trandolapril is an ACE inhibitor") == std::string::npos);
}

TEST_CASE("chain: always querying ends Unresolved", "[chain]") {
  Kb kb;
  Gateway gw(1);
  auto stub = ScriptedStub::of({"[Question] a", "[Question] b", "[Question] c", "[Question] d"});
  gw.set_backend(Role::Evaluator, stub);
  ChainConfig cfg;
  cfg.max_rounds = 3;
  try {
    run_chain(testkit::make_case("q", 2), &kb.index, &kb.embedder, gw, cfg);
    FAIL("expected Unresolved");
  } catch (const ChainError& e) {
    CHECK(e.code() == Errc::Unresolved);
    CHECK(e.trace().rounds.size() == 3);
    CHECK(e.trace().retrievals() == 3);
    CHECK(e.trace().outcome == ChainOutcome::Unresolved);
  }
  CHECK(stub->requests().size() == 3);
  CHECK(stub->remaining() == 1);
}

TEST_CASE("chain: parse failures carry the trace", "[chain]") {
  Gateway gw(1);
  gw.set_backend(Role::Evaluator, ScriptedStub::of({"I think both are fine."}));
  try {
    run_chain(testkit::make_case("q", 2), nullptr, nullptr, gw, ChainConfig{});
    FAIL("expected ParseError");
  } catch (const ChainError& e) {
    CHECK(e.code() == Errc::ParseError);
    CHECK(e.trace().rounds.size() == 1);
  }
}

TEST_CASE("chain: a query without an index fails with EmptyIndex", "[chain]") {
  Gateway gw(1);
  gw.set_backend(Role::Evaluator, ScriptedStub::of({"[Question] x"}));
  try {
    run_chain(testkit::make_case("q", 2), nullptr, nullptr, gw, ChainConfig{});
    FAIL("expected EmptyIndex");
  } catch (const ChainError& e) {
    CHECK(e.code() == Errc::EmptyIndex);
  }
}

TEST_CASE("chain: loose marker treats prose as a query", "[chain]") {
  Kb kb;
  Gateway gw(1);
  auto stub = ScriptedStub::of({"The patient's Question is about drugs.", kEval});
  gw.set_backend(Role::Evaluator, stub);
  ChainConfig cfg;
  cfg.marker = MarkerMode::LooseSubstring;
  const auto res = run_chain(testkit::make_case("q", 2), &kb.index, &kb.embedder, gw, cfg);
  CHECK(res.trace.retrievals() == 1);
}

TEST_CASE("chain: token budget drops the oldest retrieved chunks", "[chain]") {
  Kb kb;
  Gateway gw(1);
  auto stub = ScriptedStub::of({"[Question] trandolapril", "[Question] cavernoma", kEval});
  gw.set_backend(Role::Evaluator, stub);
  ChainConfig cfg;
  cfg.top_k = 1;
  const auto c = testkit::make_case("q", 2);
  const auto& chunks = kb.index.chunks();
  std::vector<ChainRound> full{
      {"[Question] trandolapril", "trandolapril", {{0, chunks[0].source_doc, 0.0, chunks[0].text}}, 0},
      {"[Question] cavernoma", "cavernoma", {{2, chunks[2].source_doc, 0.0, chunks[2].text}}, 0}};
  auto trimmed = full;
  trimmed[0].retrieved.clear();
  const auto expected = render_prompt(c, trimmed, cfg.prompt_template);
  REQUIRE(expected.approx_tokens < render_prompt(c, full, cfg.prompt_template).approx_tokens);
  cfg.token_budget = expected.approx_tokens;
  const auto res = run_chain(c, &kb.index, &kb.embedder, gw, cfg);
  CHECK(stub->requests().back().messages.back().text == expected.text);
  // The trace keeps everything that was retrieved.
  CHECK(res.trace.rounds[0].retrieved.size() == 1);
}

TEST_CASE("property: call count matches the outcome", "[chain]") {
  Kb kb;
  DeterministicRng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int max_rounds = 1 + static_cast<int>(rng.uniform_index(5));
    const int queries = static_cast<int>(rng.uniform_index(7));
    std::vector<std::string> script;
    for (int i = 0; i < queries; ++i) script.push_back("[Question] q" + std::to_string(i));
    script.push_back(kEval);
    Gateway gw(1);
    auto stub = ScriptedStub::of(script);
    gw.set_backend(Role::Evaluator, stub);
    ChainConfig cfg;
    cfg.max_rounds = max_rounds;
    try {
      const auto res = run_chain(testkit::make_case("q", 2), &kb.index, &kb.embedder, gw, cfg);
      CHECK(queries < max_rounds);
      CHECK(stub->requests().size() == res.trace.retrievals() + 1);
      CHECK(static_cast<int>(res.trace.retrievals()) == queries);
    } catch (const ChainError& e) {
      CHECK(e.code() == Errc::Unresolved);
      CHECK(queries >= max_rounds);
      CHECK(static_cast<int>(stub->requests().size()) == max_rounds);
      CHECK(static_cast<int>(e.trace().rounds.size()) == max_rounds);
    }
  }
}

TEST_CASE("synthesize wraps successes and reports failures", "[chain]") {
  Gateway gw(1);
  gw.set_backend(Role::Evaluator, ScriptedStub::of({kEval, "garbage", kEval}));
  std::vector<EvalCase> cases{testkit::make_case("a", 2), testkit::make_case("b", 2), testkit::make_case("c", 2)};
  const auto res = synthesize(cases, Source::LowTier, nullptr, nullptr, gw, ChainConfig{});
  CHECK(res.records.size() == 2);
  CHECK(res.traces.size() == 3);
  REQUIRE(res.failures.size() == 1);
  CHECK(res.failures[0]["case_id"] == cases[1].case_id);
  CHECK(res.failures[0]["error"] == "ParseError");
  CHECK(res.records[0].source == Source::LowTier);
  CHECK(res.records[1].eval_case.case_id == cases[2].case_id);
}
