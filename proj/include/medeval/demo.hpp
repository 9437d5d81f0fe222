#pragma once
// Offline end-to-end run on a synthetic corpus with deterministic stub
// backends. Output depends only on the seed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "medeval/gateway.hpp"
#include "medeval/ingest.hpp"
#include "medeval/model.hpp"

namespace medeval::demo {

struct Condition {
  std::string name;
  std::string symptom;
  std::string ask;
  std::vector<std::string> facts;     // three reference facts
  std::vector<std::string> keywords;  // one per fact, lower case
  std::string lookup;                 // non-empty: the evaluator asks for knowledge first
};

const std::vector<Condition>& conditions();

struct Corpus {
  std::vector<nlohmann::json> qa_lines;             // raw QA file, including rephrase prompts
  std::map<std::string, std::string> documents;     // file name -> text
};

Corpus make_corpus(std::uint64_t seed, std::size_t cases_per_condition = 6);

// Responder for one model label; answer quality is drawn per question.
std::shared_ptr<gateway::Backend> responder_stub(std::uint64_t seed, const std::string& label);

// Evaluator stub that parses the rendered prompt. "high" scores by reference
// keyword coverage and looks up knowledge first where needed; "low" is terse
// and noisy.
std::shared_ptr<gateway::Backend> evaluator_stub(const std::string& tier);

// Score (1..5) the keyword grader gives a response to a question.
int keyword_score(const std::string& question, const std::string& response);

struct RunOptions {
  std::uint64_t seed = 7;
  std::size_t cases_per_condition = 6;
  int iterations = 4;
  std::size_t workers = 2;
};

// Runs every stage into out_dir and returns the summary (also written to
// summary.json).
nlohmann::json run(const std::filesystem::path& out_dir, const RunOptions& options, std::ostream& log);

}  // namespace medeval::demo
