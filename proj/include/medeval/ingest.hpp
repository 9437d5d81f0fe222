#pragma once
// Corpus ingest: QA loading, pattern filtering, and case assembly.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "medeval/model.hpp"

namespace medeval::ingest {

struct QaPair {
  std::size_t source_index = 0;  // position in the loaded file (0-based, valid lines only)
  std::string question;
  std::string answer;

  bool operator==(const QaPair&) const = default;
};

struct Reject {
  std::size_t line_no = 0;  // 1-based line in the input file
  std::string reason;
};

struct LoadResult {
  std::vector<QaPair> pairs;
  std::vector<Reject> rejects;
};

// Accepts {question, answer} or the instruction/input/output layout, where
// input (falling back to instruction) is the question and output the answer.
LoadResult load_qa(const std::filesystem::path& path);

struct FilterRule {
  std::string pattern;  // case-insensitive literal substring
  std::string description;
};

// The documented default: drops prompts asking to rephrase text.
std::vector<FilterRule> default_rules();
// One pattern per line; blank lines and '#' comments ignored.
std::vector<FilterRule> load_rules(const std::filesystem::path& path);

struct IngestReport {
  std::size_t total_in = 0;
  std::size_t filtered_out = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> rule_hits;  // pattern -> pairs matched

  bool operator==(const IngestReport&) const = default;
  nlohmann::json to_json() const;
};

struct FilterResult {
  std::vector<QaPair> kept;
  IngestReport report;
};

// A pair is dropped iff some rule's pattern occurs in its question or answer.
// Every matching rule is counted in rule_hits, so hits may sum past
// filtered_out when rules overlap.
FilterResult apply_filter(const std::vector<QaPair>& pairs, const std::vector<FilterRule>& rules);

// responder_outputs[label][i] answers pairs[i]. Responses within a case are
// ordered by label.
std::vector<EvalCase> assemble_cases(const std::vector<QaPair>& pairs,
                                     const std::map<std::string, std::vector<std::string>>& responder_outputs);
std::vector<EvalCase> assemble_cases(const std::vector<QaPair>& pairs,
                                     const std::map<std::string, std::vector<ModelResponse>>& responder_outputs);

}  // namespace medeval::ingest
