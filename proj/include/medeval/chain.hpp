#pragma once
// Knowledge completion chain and the evaluation grammar.
//
// The evaluator either answers with a full evaluation or asks for missing
// knowledge with a query. Queries are answered from the vector index and the
// accumulated (output, knowledge) rounds are fed back, up to max_rounds.
//
// Evaluation grammar:
//   Evaluation := "Analyze:" Step+ "Score:" ScoreEntry+
//   Step       := "Step" INT ":" text
//   ScoreEntry := "Doctor" INT ":" INT ("point" | "points") [.,;]?

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medeval/gateway.hpp"
#include "medeval/knowledge.hpp"
#include "medeval/model.hpp"

namespace medeval::chain {

enum class MarkerMode { StrictBracket, LooseSubstring };
std::string_view to_string(MarkerMode m) noexcept;
MarkerMode marker_from_string(std::string_view s);

std::string default_template();

struct ChainConfig {
  int max_rounds = 5;
  std::size_t top_k = knowledge::kDefaultTopK;
  MarkerMode marker = MarkerMode::StrictBracket;
  std::string prompt_template = default_template();
  GenerationParams params{0.0, 1024, 50, 1.0};
  std::size_t token_budget = 2048;  // above this, retrieved chunks of the oldest rounds are dropped

  void validate() const;
};

struct RetrievedChunk {
  std::size_t chunk_id = 0;
  std::string source_doc;
  double similarity = 0.0;
  std::string text;
  bool operator==(const RetrievedChunk&) const = default;
};

struct ChainRound {
  std::string llm_output;
  std::optional<std::string> query;
  std::vector<RetrievedChunk> retrieved;
  std::size_t prompt_tokens = 0;
  bool operator==(const ChainRound&) const = default;
};

enum class ChainOutcome { Evaluated, Unresolved };

struct ChainTrace {
  std::string case_id;
  std::vector<ChainRound> rounds;
  ChainOutcome outcome = ChainOutcome::Unresolved;

  std::size_t retrievals() const;
  nlohmann::json to_json() const;
};

// Carries the trace of the chain that failed.
class ChainError : public Error {
 public:
  ChainError(Errc code, const std::string& message, ChainTrace trace)
      : Error(code, message), trace_(std::move(trace)) {}
  const ChainTrace& trace() const noexcept { return trace_; }

 private:
  ChainTrace trace_;
};

enum class ParseFailure {
  MissingScoreSection,
  DuplicateDoctor,
  MissingDoctor,
  UnknownDoctor,
  ScoreOutOfRange,
  MalformedScoreEntry,
  MalformedStep,
  NoSteps,
};
std::string_view to_string(ParseFailure f) noexcept;

class EvaluationParseError : public Error {
 public:
  EvaluationParseError(ParseFailure reason, const std::string& message, int doctor = 0);
  ParseFailure reason() const noexcept { return reason_; }
  int doctor() const noexcept { return doctor_; }

 private:
  ParseFailure reason_;
  int doctor_;
};

// StrictBracket: text after a line-leading "[Question]" marker.
// LooseSubstring: the whole output whenever it contains "Question".
std::optional<std::string> detect_query(std::string_view llm_output, MarkerMode mode);

// Returns complete coverage of doctors 1..n_responses or throws.
EvaluationResult parse_evaluation(std::string_view text, std::size_t n_responses);
// Canonical rendering; parse_evaluation(format_evaluation(r)) == r modulo raw_text.
std::string format_evaluation(const EvaluationResult& result);

struct RenderedPrompt {
  std::string text;
  std::size_t words = 0;
  std::size_t approx_tokens = 0;
};

// Question, numbered doctor responses and the reference answer.
std::string render_case_tuple(const EvalCase& c);

// Template slots: {{one_shot}} {{question}} {{responses}} {{reference}}.
RenderedPrompt render_prompt(const EvalCase& c, std::span<const ChainRound> prior_rounds, std::string_view tmpl);

struct ChainResult {
  EvaluationResult evaluation;
  ChainTrace trace;
};

// index/embedder may be null when no retrieval is expected; a query then
// fails with EmptyIndex.
ChainResult run_chain(const EvalCase& c, const knowledge::VectorIndex* index, const knowledge::Embedder* embedder,
                      gateway::Gateway& gw, const ChainConfig& config);

struct SynthesisResult {
  std::vector<InstructionRecord> records;  // case order, failures omitted
  std::vector<ChainTrace> traces;          // one per case, failures included
  std::vector<nlohmann::json> failures;    // {case_id, error, message}
};

// Runs the chain over every case and wraps each evaluation as an
// instruction record of the given tier.
SynthesisResult synthesize(const std::vector<EvalCase>& cases, Source source, const knowledge::VectorIndex* index,
                           const knowledge::Embedder* embedder, gateway::Gateway& gw, const ChainConfig& config,
                           std::size_t workers = 1);

}  // namespace medeval::chain
