#pragma once
// Domain types shared across the pipeline.
//
// Every type is a plain value object with JSON (de)serialization. Decoding
// validates invariants and throws medeval::Error on violation, so anything
// read from disk is already well formed.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medeval/error.hpp"
#include "medeval/util.hpp"

namespace medeval {

struct GenerationParams {
  double temperature = 0.5;
  int max_new_tokens = 200;
  int top_k = 50;
  double top_p = 1.0;

  void validate() const;
  bool operator==(const GenerationParams&) const = default;
};

struct ModelResponse {
  std::string model_label;
  std::string text;
  std::optional<GenerationParams> generation_params;

  bool operator==(const ModelResponse&) const = default;
};

struct EvalCase {
  std::string case_id;
  std::string question;
  std::vector<ModelResponse> responses;
  std::string reference_answer;

  // Distinct model labels, in response order.
  std::vector<std::string> model_labels() const;
  bool operator==(const EvalCase&) const = default;
};

// Content hash of (question, reference_answer); reruns of ingest assign the
// same id to the same case.
std::string make_case_id(std::string_view question, std::string_view reference_answer);

// Checks every EvalCase invariant. A blank case_id is filled with
// make_case_id; everything else is returned unchanged.
EvalCase validate_case(EvalCase raw);

struct EvaluationResult {
  std::vector<std::string> steps;
  // scores[i] is the integer score (1..5) of response i.
  std::vector<int> scores;
  std::string raw_text;

  void validate(std::size_t n_responses) const;
  bool operator==(const EvaluationResult&) const = default;
};

enum class Source { HighTier, LowTier };
enum class Quality { Unclassified, High, Low };
enum class VerificationStatus { Pending, Approved, Rejected };

enum class Criterion : std::size_t { KnowledgeCorrect = 0, NoMisattribution = 1, Fluent = 2 };
inline constexpr std::size_t kCriteriaCount = 3;
using Criteria = std::array<bool, kCriteriaCount>;

struct VerificationState {
  VerificationStatus status = VerificationStatus::Pending;
  std::optional<Criteria> criteria;
  std::optional<std::string> reviewer_id;
  std::optional<std::string> note;

  static VerificationState decide(const Criteria& criteria,
                                  std::optional<std::string> reviewer = std::nullopt,
                                  std::optional<std::string> note = std::nullopt);
  void validate() const;
  bool operator==(const VerificationState&) const = default;
};

enum class SuggestionVerdict { JudgeAccepted, JudgeRejected, JuryAccepted, JuryRejected, PendingJury };
enum class SuggestionAuthor { Suggester, Jury };

struct Suggestion {
  std::string text;
  int round = 1;
  SuggestionVerdict verdict = SuggestionVerdict::JudgeAccepted;
  SuggestionAuthor author = SuggestionAuthor::Suggester;

  bool accepted() const noexcept {
    return verdict == SuggestionVerdict::JudgeAccepted || verdict == SuggestionVerdict::JuryAccepted;
  }
  void validate() const;
  bool operator==(const Suggestion&) const = default;
};

struct InstructionRecord {
  EvalCase eval_case;  // serialized as "case"
  EvaluationResult evaluation;
  Source source = Source::HighTier;
  Quality quality = Quality::Unclassified;
  VerificationState verification;
  std::vector<Suggestion> suggestions;

  // case_id plus the provenance tier; high- and low-tier evaluations of the
  // same case are distinct records.
  std::string record_id() const;
  void validate() const;
  bool operator==(const InstructionRecord&) const = default;
};

struct ResponseRating {
  std::size_t response_index = 0;
  int relevancy = 0;
  int fluency = 0;
  int knowledge_correctness = 0;

  double mean() const noexcept { return (relevancy + fluency + knowledge_correctness) / 3.0; }
  bool operator==(const ResponseRating&) const = default;
};

struct EvaluationRating {
  int reference_correctness = 0;
  int fluency = 0;
  int knowledge_correctness = 0;

  double mean() const noexcept {
    return (reference_correctness + fluency + knowledge_correctness) / 3.0;
  }
  bool operator==(const EvaluationRating&) const = default;
};

struct HumanAnnotation {
  std::string case_id;
  std::string annotator_id;
  std::vector<ResponseRating> responses;
  std::optional<EvaluationRating> evaluation;

  // Every scored index must be < n_responses (when known) and unique.
  void validate(std::optional<std::size_t> n_responses = std::nullopt) const;
  bool operator==(const HumanAnnotation&) const = default;
};

std::string_view to_string(Source v) noexcept;
std::string_view to_string(Quality v) noexcept;
std::string_view to_string(VerificationStatus v) noexcept;
std::string_view to_string(SuggestionVerdict v) noexcept;
std::string_view to_string(SuggestionAuthor v) noexcept;

void to_json(nlohmann::json& j, const GenerationParams& v);
void from_json(const nlohmann::json& j, GenerationParams& v);
void to_json(nlohmann::json& j, const ModelResponse& v);
void from_json(const nlohmann::json& j, ModelResponse& v);
void to_json(nlohmann::json& j, const EvalCase& v);
void from_json(const nlohmann::json& j, EvalCase& v);
void to_json(nlohmann::json& j, const EvaluationResult& v);
void from_json(const nlohmann::json& j, EvaluationResult& v);
void to_json(nlohmann::json& j, const VerificationState& v);
void from_json(const nlohmann::json& j, VerificationState& v);
void to_json(nlohmann::json& j, const Suggestion& v);
void from_json(const nlohmann::json& j, Suggestion& v);
void to_json(nlohmann::json& j, const InstructionRecord& v);
void from_json(const nlohmann::json& j, InstructionRecord& v);
void to_json(nlohmann::json& j, const ResponseRating& v);
void from_json(const nlohmann::json& j, ResponseRating& v);
void to_json(nlohmann::json& j, const EvaluationRating& v);
void from_json(const nlohmann::json& j, EvaluationRating& v);
void to_json(nlohmann::json& j, const HumanAnnotation& v);
void from_json(const nlohmann::json& j, HumanAnnotation& v);

// JSONL helpers. Reading validates each line and names the failing line.
template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::vector<T> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (is_blank(line)) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidValue, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const auto& item : items) {
    out += nlohmann::json(item).dump();
    out += '\n';
  }
  return out;
}

}  // namespace medeval
