#include "medeval/model.hpp"

#include <set>

namespace medeval {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(Errc code, const std::string& msg) { throw Error(code, msg); }

void require_nonblank(std::string_view value, const char* field) {
  if (is_blank(value)) invalid(Errc::BlankField, std::string("blank field: ") + field);
}

template <typename E, std::size_t N>
E enum_from(const json& j, const std::array<E, N>& values, const char* type) {
  const auto s = j.get<std::string>();
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  invalid(Errc::InvalidValue, std::string("unknown ") + type + " '" + s + "'");
}

template <typename T>
std::optional<T> opt_get(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

void GenerationParams::validate() const {
  if (!(temperature >= 0.0)) invalid(Errc::InvalidValue, "temperature must be >= 0");
  if (max_new_tokens <= 0) invalid(Errc::InvalidValue, "max_new_tokens must be positive");
  if (top_k <= 0) invalid(Errc::InvalidValue, "top_k must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) invalid(Errc::InvalidValue, "top_p must be in (0, 1]");
}

std::vector<std::string> EvalCase::model_labels() const {
  std::vector<std::string> labels;
  for (const auto& r : responses) labels.push_back(r.model_label);
  return labels;
}

std::string make_case_id(std::string_view question, std::string_view reference_answer) {
  std::string material(question);
  material.push_back('\x1f');
  material.append(reference_answer);
  return sha256_hex(material).substr(0, 16);
}

EvalCase validate_case(EvalCase raw) {
  require_nonblank(raw.question, "question");
  require_nonblank(raw.reference_answer, "reference_answer");
  if (raw.responses.empty()) invalid(Errc::EmptyResponses, "case has no responses");
  std::set<std::string> seen;
  for (const auto& r : raw.responses) {
    require_nonblank(r.model_label, "model_label");
    require_nonblank(r.text, "response text");
    if (!seen.insert(r.model_label).second) {
      invalid(Errc::DuplicateModelLabel, "duplicate model label '" + r.model_label + "'");
    }
    if (r.generation_params) r.generation_params->validate();
  }
  if (is_blank(raw.case_id)) raw.case_id = make_case_id(raw.question, raw.reference_answer);
  return raw;
}

void EvaluationResult::validate(std::size_t n_responses) const {
  if (steps.empty()) invalid(Errc::InvalidValue, "evaluation has no steps");
  if (scores.size() != n_responses) {
    invalid(Errc::InvalidValue, "evaluation scores " + std::to_string(scores.size()) +
                                    " responses, case has " + std::to_string(n_responses));
  }
  for (int s : scores) {
    if (s < 1 || s > 5) invalid(Errc::InvalidValue, "score out of range: " + std::to_string(s));
  }
}

VerificationState VerificationState::decide(const Criteria& criteria,
                                            std::optional<std::string> reviewer,
                                            std::optional<std::string> note) {
  VerificationState st;
  st.criteria = criteria;
  st.status = (criteria[0] && criteria[1] && criteria[2]) ? VerificationStatus::Approved
                                                          : VerificationStatus::Rejected;
  st.reviewer_id = std::move(reviewer);
  st.note = std::move(note);
  return st;
}

void VerificationState::validate() const {
  if (status == VerificationStatus::Pending) {
    if (criteria) invalid(Errc::InvalidValue, "pending verification must not carry criteria");
    return;
  }
  if (!criteria) invalid(Errc::InvalidValue, "decided verification requires criteria");
  const bool all = (*criteria)[0] && (*criteria)[1] && (*criteria)[2];
  if (all != (status == VerificationStatus::Approved)) {
    invalid(Errc::InvalidValue, "verification status disagrees with criteria");
  }
}

void Suggestion::validate() const {
  require_nonblank(text, "suggestion text");
  if (round < 1 || round > 3) invalid(Errc::InvalidValue, "suggestion round must be 1..3");
  // Jury verdicts only exist after a three-round escalation.
  const bool jury = verdict == SuggestionVerdict::JuryAccepted ||
                    verdict == SuggestionVerdict::JuryRejected ||
                    verdict == SuggestionVerdict::PendingJury;
  if (jury && round != 3) invalid(Errc::InvalidValue, "jury verdict requires round 3");
  if (author == SuggestionAuthor::Jury && verdict != SuggestionVerdict::JuryAccepted) {
    invalid(Errc::InvalidValue, "jury-authored suggestion must be JuryAccepted");
  }
}

std::string InstructionRecord::record_id() const {
  return eval_case.case_id + (source == Source::HighTier ? ":hi" : ":lo");
}

void InstructionRecord::validate() const {
  validate_case(eval_case);
  require_nonblank(eval_case.case_id, "case_id");
  evaluation.validate(eval_case.responses.size());
  verification.validate();
  for (const auto& s : suggestions) s.validate();
}

void HumanAnnotation::validate(std::optional<std::size_t> n_responses) const {
  require_nonblank(case_id, "case_id");
  require_nonblank(annotator_id, "annotator_id");
  std::set<std::size_t> seen;
  auto in_range = [](int v) { return v >= 1 && v <= 5; };
  for (const auto& r : responses) {
    if (n_responses && r.response_index >= *n_responses) {
      invalid(Errc::InvalidValue, "annotation scores unknown response " + std::to_string(r.response_index));
    }
    if (!seen.insert(r.response_index).second) {
      invalid(Errc::InvalidValue, "response annotated twice: " + std::to_string(r.response_index));
    }
    if (!in_range(r.relevancy) || !in_range(r.fluency) || !in_range(r.knowledge_correctness)) {
      invalid(Errc::InvalidValue, "annotation rating outside 1..5");
    }
  }
  if (evaluation && (!in_range(evaluation->reference_correctness) || !in_range(evaluation->fluency) ||
                     !in_range(evaluation->knowledge_correctness))) {
    invalid(Errc::InvalidValue, "evaluation rating outside 1..5");
  }
}

std::string_view to_string(Source v) noexcept {
  return v == Source::HighTier ? "HighTier" : "LowTier";
}

std::string_view to_string(Quality v) noexcept {
  switch (v) {
    case Quality::Unclassified: return "Unclassified";
    case Quality::High: return "High";
    case Quality::Low: return "Low";
  }
  return "?";
}

std::string_view to_string(VerificationStatus v) noexcept {
  switch (v) {
    case VerificationStatus::Pending: return "Pending";
    case VerificationStatus::Approved: return "Approved";
    case VerificationStatus::Rejected: return "Rejected";
  }
  return "?";
}

std::string_view to_string(SuggestionVerdict v) noexcept {
  switch (v) {
    case SuggestionVerdict::JudgeAccepted: return "JudgeAccepted";
    case SuggestionVerdict::JudgeRejected: return "JudgeRejected";
    case SuggestionVerdict::JuryAccepted: return "JuryAccepted";
    case SuggestionVerdict::JuryRejected: return "JuryRejected";
    case SuggestionVerdict::PendingJury: return "PendingJury";
  }
  return "?";
}

std::string_view to_string(SuggestionAuthor v) noexcept {
  return v == SuggestionAuthor::Suggester ? "Suggester" : "Jury";
}

// --- JSON ------------------------------------------------------------------

void to_json(json& j, const GenerationParams& v) {
  j = json{{"temperature", v.temperature},
           {"max_new_tokens", v.max_new_tokens},
           {"top_k", v.top_k},
           {"top_p", v.top_p}};
}

void from_json(const json& j, GenerationParams& v) {
  GenerationParams d;
  v.temperature = j.value("temperature", d.temperature);
  v.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
  v.top_k = j.value("top_k", d.top_k);
  v.top_p = j.value("top_p", d.top_p);
  v.validate();
}

void to_json(json& j, const ModelResponse& v) {
  j = json{{"model_label", v.model_label}, {"text", v.text}};
  j["generation_params"] = v.generation_params ? json(*v.generation_params) : json(nullptr);
}

void from_json(const json& j, ModelResponse& v) {
  v.model_label = j.at("model_label").get<std::string>();
  v.text = j.at("text").get<std::string>();
  v.generation_params = opt_get<GenerationParams>(j, "generation_params");
}

void to_json(json& j, const EvalCase& v) {
  j = json{{"case_id", v.case_id},
           {"question", v.question},
           {"responses", v.responses},
           {"reference_answer", v.reference_answer}};
}

void from_json(const json& j, EvalCase& v) {
  EvalCase raw;
  raw.case_id = j.value("case_id", std::string{});
  raw.question = j.at("question").get<std::string>();
  raw.responses = j.at("responses").get<std::vector<ModelResponse>>();
  raw.reference_answer = j.at("reference_answer").get<std::string>();
  v = validate_case(std::move(raw));
}

void to_json(json& j, const EvaluationResult& v) {
  j = json{{"steps", v.steps}, {"scores", v.scores}, {"raw_text", v.raw_text}};
}

void from_json(const json& j, EvaluationResult& v) {
  v.steps = j.at("steps").get<std::vector<std::string>>();
  v.scores.clear();
  for (const auto& s : j.at("scores")) {
    if (!s.is_number_integer()) invalid(Errc::InvalidValue, "evaluation score must be an integer: " + s.dump());
    v.scores.push_back(s.get<int>());
  }
  v.raw_text = j.at("raw_text").get<std::string>();
  // Coverage against the owning case is checked by InstructionRecord.
  v.validate(v.scores.size());
}

void to_json(json& j, const VerificationState& v) {
  j = json{{"status", to_string(v.status)}};
  if (v.criteria) {
    j["criteria"] = json{{"knowledge_correct", (*v.criteria)[0]},
                         {"no_misattribution", (*v.criteria)[1]},
                         {"fluent", (*v.criteria)[2]}};
  } else {
    j["criteria"] = nullptr;
  }
  j["reviewer_id"] = v.reviewer_id ? json(*v.reviewer_id) : json(nullptr);
  j["note"] = v.note ? json(*v.note) : json(nullptr);
}

void from_json(const json& j, VerificationState& v) {
  v.status = enum_from(j.at("status"),
                       std::array{VerificationStatus::Pending, VerificationStatus::Approved,
                                  VerificationStatus::Rejected},
                       "verification status");
  v.criteria.reset();
  if (auto it = j.find("criteria"); it != j.end() && !it->is_null()) {
    v.criteria = Criteria{it->at("knowledge_correct").get<bool>(),
                          it->at("no_misattribution").get<bool>(), it->at("fluent").get<bool>()};
  }
  v.reviewer_id = opt_get<std::string>(j, "reviewer_id");
  v.note = opt_get<std::string>(j, "note");
  v.validate();
}

void to_json(json& j, const Suggestion& v) {
  j = json{{"text", v.text},
           {"round", v.round},
           {"verdict", to_string(v.verdict)},
           {"author", to_string(v.author)}};
}

void from_json(const json& j, Suggestion& v) {
  v.text = j.at("text").get<std::string>();
  v.round = j.at("round").get<int>();
  v.verdict = enum_from(j.at("verdict"),
                        std::array{SuggestionVerdict::JudgeAccepted, SuggestionVerdict::JudgeRejected,
                                   SuggestionVerdict::JuryAccepted, SuggestionVerdict::JuryRejected,
                                   SuggestionVerdict::PendingJury},
                        "suggestion verdict");
  v.author = enum_from(j.at("author"), std::array{SuggestionAuthor::Suggester, SuggestionAuthor::Jury},
                       "suggestion author");
  v.validate();
}

void to_json(json& j, const InstructionRecord& v) {
  j = json{{"case", v.eval_case},
           {"evaluation", v.evaluation},
           {"source", to_string(v.source)},
           {"quality", to_string(v.quality)},
           {"verification", v.verification},
           {"suggestions", v.suggestions}};
}

void from_json(const json& j, InstructionRecord& v) {
  v.eval_case = j.at("case").get<EvalCase>();
  v.evaluation = j.at("evaluation").get<EvaluationResult>();
  v.source = enum_from(j.at("source"), std::array{Source::HighTier, Source::LowTier}, "source");
  v.quality = enum_from(j.value("quality", json("Unclassified")),
                        std::array{Quality::Unclassified, Quality::High, Quality::Low}, "quality");
  v.verification = j.contains("verification") ? j.at("verification").get<VerificationState>()
                                              : VerificationState{};
  v.suggestions = j.value("suggestions", std::vector<Suggestion>{});
  v.validate();
}

void to_json(json& j, const ResponseRating& v) {
  j = json{{"response_index", v.response_index},
           {"relevancy", v.relevancy},
           {"fluency", v.fluency},
           {"knowledge_correctness", v.knowledge_correctness}};
}

void from_json(const json& j, ResponseRating& v) {
  v.response_index = j.at("response_index").get<std::size_t>();
  v.relevancy = j.at("relevancy").get<int>();
  v.fluency = j.at("fluency").get<int>();
  v.knowledge_correctness = j.at("knowledge_correctness").get<int>();
}

void to_json(json& j, const EvaluationRating& v) {
  j = json{{"reference_correctness", v.reference_correctness},
           {"fluency", v.fluency},
           {"knowledge_correctness", v.knowledge_correctness}};
}

void from_json(const json& j, EvaluationRating& v) {
  v.reference_correctness = j.at("reference_correctness").get<int>();
  v.fluency = j.at("fluency").get<int>();
  v.knowledge_correctness = j.at("knowledge_correctness").get<int>();
}

void to_json(json& j, const HumanAnnotation& v) {
  j = json{{"case_id", v.case_id}, {"annotator_id", v.annotator_id}, {"responses", v.responses}};
  j["evaluation"] = v.evaluation ? json(*v.evaluation) : json(nullptr);
}

void from_json(const json& j, HumanAnnotation& v) {
  v.case_id = j.at("case_id").get<std::string>();
  v.annotator_id = j.at("annotator_id").get<std::string>();
  v.responses = j.at("responses").get<std::vector<ResponseRating>>();
  v.evaluation = opt_get<EvaluationRating>(j, "evaluation");
  v.validate();
}

}  // namespace medeval
