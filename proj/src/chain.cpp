#include "medeval/chain.hpp"

#include <cctype>
#include <regex>
#include <set>

namespace medeval::chain {

using nlohmann::json;

std::string_view to_string(MarkerMode m) noexcept {
  return m == MarkerMode::StrictBracket ? "strict" : "loose";
}

MarkerMode marker_from_string(std::string_view s) {
  if (s == "strict") return MarkerMode::StrictBracket;
  if (s == "loose") return MarkerMode::LooseSubstring;
  throw Error(Errc::InvalidValue, "marker mode must be 'strict' or 'loose', got '" + std::string(s) + "'");
}

std::string default_template() {
  return R"(You are an experienced physician reviewing answers that several doctors gave to a patient's question.
Compare every doctor's response against the question and the reference answer. Judge the medical knowledge, whether the response addresses what was asked, and how clearly it is written.

If you lack medical knowledge needed to judge a response, do not guess. Reply with a single line of the form
[Question] <what you need to look up>
and nothing else. The relevant reference material will be provided.

Otherwise reply exactly in this format, one step per line, scoring every doctor with an integer from 1 to 5:
Analyze:
Step 1: ...
Step 2: ...
Score: Doctor 1: <n> points. Doctor 2: <n> points.

Example:
{{one_shot}}

Now evaluate the following case.
Patient's question: {{question}}
{{responses}}
Reference answer: {{reference}})";
}

namespace {

constexpr std::string_view kOneShot =
    R"(Patient's question: Can I take ibuprofen together with lisinopril?
Doctor 1: Yes, there is no interaction, take both as you like.
Doctor 2: Occasional use is usually fine, but regular NSAIDs such as ibuprofen can reduce the effect of ACE inhibitors like lisinopril and strain the kidneys, so ask your doctor about paracetamol instead.
Reference answer: NSAIDs may blunt the antihypertensive effect of ACE inhibitors and raise the risk of kidney injury; short courses need monitoring and paracetamol is preferred.
Analyze:
Step 1: The patient asks whether ibuprofen and lisinopril can be combined.
Step 2: Doctor 1 denies any interaction, which is incorrect and potentially harmful.
Step 3: Doctor 2 explains the reduced blood pressure effect and kidney risk and offers a safer alternative, matching the reference.
Score: Doctor 1: 1 point. Doctor 2: 5 points.)";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

void ChainConfig::validate() const {
  if (max_rounds < 1) throw Error(Errc::InvalidValue, "max_rounds must be >= 1");
  if (top_k < 1) throw Error(Errc::InvalidValue, "top_k must be >= 1");
  params.validate();
}

std::size_t ChainTrace::retrievals() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.query ? 1 : 0;
  return n;
}

json ChainTrace::to_json() const {
  json rs = json::array();
  for (const auto& r : rounds) {
    json chunks = json::array();
    for (const auto& c : r.retrieved) {
      chunks.push_back({{"chunk_id", c.chunk_id},
                        {"source_doc", c.source_doc},
                        {"similarity", c.similarity},
                        {"text", c.text}});
    }
    rs.push_back({{"llm_output", r.llm_output},
                  {"query", r.query ? json(*r.query) : json(nullptr)},
                  {"retrieved", chunks},
                  {"prompt_tokens", r.prompt_tokens}});
  }
  return json{{"case_id", case_id},
              {"outcome", outcome == ChainOutcome::Evaluated ? "Evaluated" : "Unresolved"},
              {"rounds", rs}};
}

std::string_view to_string(ParseFailure f) noexcept {
  switch (f) {
    case ParseFailure::MissingScoreSection: return "MissingScoreSection";
    case ParseFailure::DuplicateDoctor: return "DuplicateDoctor";
    case ParseFailure::MissingDoctor: return "MissingDoctor";
    case ParseFailure::UnknownDoctor: return "UnknownDoctor";
    case ParseFailure::ScoreOutOfRange: return "ScoreOutOfRange";
    case ParseFailure::MalformedScoreEntry: return "MalformedScoreEntry";
    case ParseFailure::MalformedStep: return "MalformedStep";
    case ParseFailure::NoSteps: return "NoSteps";
  }
  return "?";
}

EvaluationParseError::EvaluationParseError(ParseFailure reason, const std::string& message, int doctor)
    : Error(Errc::ParseError, message, {{"reason", std::string(to_string(reason))}, {"doctor", doctor}}),
      reason_(reason),
      doctor_(doctor) {}

std::optional<std::string> detect_query(std::string_view llm_output, MarkerMode mode) {
  if (mode == MarkerMode::LooseSubstring) {
    std::string lower(llm_output);
    for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (lower.find("question") != std::string::npos) return trim(llm_output);
    return std::nullopt;
  }
  constexpr std::string_view marker = "[Question]";
  std::size_t start = 0;
  while (start <= llm_output.size()) {
    auto end = llm_output.find('\n', start);
    if (end == std::string_view::npos) end = llm_output.size();
    auto line = trim(llm_output.substr(start, end - start));
    if (line.starts_with(marker)) {
      auto q = trim(std::string_view(line).substr(marker.size()));
      if (!q.empty()) return q;
    }
    start = end + 1;
  }
  return std::nullopt;
}

EvaluationResult parse_evaluation(std::string_view text, std::size_t n_responses) {
  if (n_responses < 1) throw Error(Errc::InvalidValue, "parse_evaluation needs n_responses >= 1");
  constexpr std::string_view analyze_kw = "Analyze:";
  constexpr std::string_view score_kw = "Score:";

  const auto analyze = text.find(analyze_kw);
  if (analyze == std::string_view::npos) throw EvaluationParseError(ParseFailure::NoSteps, "missing 'Analyze:'");
  const auto score = text.rfind(score_kw);
  if (score == std::string_view::npos || score < analyze) {
    throw EvaluationParseError(ParseFailure::MissingScoreSection, "missing 'Score:' section");
  }

  EvaluationResult out;
  out.raw_text = std::string(text);

  // Steps.
  const std::string steps_region(text.substr(analyze + analyze_kw.size(), score - analyze - analyze_kw.size()));
  static const std::regex step_re(R"(Step\s+\d+\s*:)");
  std::vector<std::pair<std::size_t, std::size_t>> marks;  // (match start, content start)
  for (auto it = std::sregex_iterator(steps_region.begin(), steps_region.end(), step_re); it != std::sregex_iterator();
       ++it) {
    marks.emplace_back(static_cast<std::size_t>(it->position()), static_cast<std::size_t>(it->position() + it->length()));
  }
  if (marks.empty()) throw EvaluationParseError(ParseFailure::NoSteps, "no 'Step N:' entries");
  if (!is_blank(std::string_view(steps_region).substr(0, marks.front().first))) {
    throw EvaluationParseError(ParseFailure::MalformedStep, "text between 'Analyze:' and the first step");
  }
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const auto end = i + 1 < marks.size() ? marks[i + 1].first : steps_region.size();
    auto body = trim(std::string_view(steps_region).substr(marks[i].second, end - marks[i].second));
    if (body.empty()) throw EvaluationParseError(ParseFailure::MalformedStep, "empty step " + std::to_string(i + 1));
    out.steps.push_back(std::move(body));
  }

  // Scores.
  const std::string score_region(text.substr(score + score_kw.size()));
  static const std::regex entry_re(R"(^\s*Doctor\s+(\d+)\s*:\s*(-?\d+(?:\.\d+)?)\s*points?\b\s*[.,;]?)");
  std::vector<int> scores(n_responses, 0);
  std::set<int> seen;
  auto pos = score_region.cbegin();
  std::smatch m;
  bool any = false;
  while (std::regex_search(pos, score_region.cend(), m, entry_re, std::regex_constants::match_continuous)) {
    any = true;
    const int doctor = std::stoi(m[1].str());
    const std::string value = m[2].str();
    if (!seen.insert(doctor).second) {
      throw EvaluationParseError(ParseFailure::DuplicateDoctor, "Doctor " + std::to_string(doctor) + " scored twice",
                                 doctor);
    }
    if (doctor < 1 || static_cast<std::size_t>(doctor) > n_responses) {
      throw EvaluationParseError(ParseFailure::UnknownDoctor,
                                 "Doctor " + std::to_string(doctor) + " does not exist in a " +
                                     std::to_string(n_responses) + "-response case",
                                 doctor);
    }
    if (value.find('.') != std::string::npos) {
      throw EvaluationParseError(ParseFailure::MalformedScoreEntry, "fractional score '" + value + "'", doctor);
    }
    const int s = std::stoi(value);
    if (s < 1 || s > 5) {
      throw EvaluationParseError(ParseFailure::ScoreOutOfRange, "score " + value + " outside 1..5", doctor);
    }
    scores[static_cast<std::size_t>(doctor - 1)] = s;
    pos = m[0].second;
  }
  if (!any) throw EvaluationParseError(ParseFailure::MissingScoreSection, "'Score:' has no 'Doctor N: S points' entries");
  if (const std::string rest(pos, score_region.cend()); !is_blank(rest)) {
    throw EvaluationParseError(ParseFailure::MalformedScoreEntry,
                               "unparseable text in score section: '" + trim(rest) + "'");
  }
  for (std::size_t i = 0; i < n_responses; ++i) {
    if (scores[i] == 0) {
      const int d = static_cast<int>(i + 1);
      throw EvaluationParseError(ParseFailure::MissingDoctor, "Doctor " + std::to_string(d) + " has no score", d);
    }
  }
  out.scores = std::move(scores);
  return out;
}

std::string format_evaluation(const EvaluationResult& result) {
  std::string out = "Analyze:\n";
  for (std::size_t i = 0; i < result.steps.size(); ++i) {
    out += "Step " + std::to_string(i + 1) + ": " + result.steps[i] + "\n";
  }
  out += "Score:";
  for (std::size_t i = 0; i < result.scores.size(); ++i) {
    out += " Doctor " + std::to_string(i + 1) + ": " + std::to_string(result.scores[i]) + " points.";
  }
  return out;
}

std::string render_case_tuple(const EvalCase& c) {
  std::string out = "Patient's question: " + c.question + "\n";
  for (std::size_t i = 0; i < c.responses.size(); ++i) {
    out += "Doctor " + std::to_string(i + 1) + ": " + c.responses[i].text + "\n";
  }
  out += "Reference answer: " + c.reference_answer;
  return out;
}

RenderedPrompt render_prompt(const EvalCase& c, std::span<const ChainRound> prior_rounds, std::string_view tmpl) {
  for (std::string_view slot : {"{{one_shot}}", "{{question}}", "{{responses}}", "{{reference}}"}) {
    if (tmpl.find(slot) == std::string_view::npos) {
      throw Error(Errc::MissingSlot, "prompt template lacks " + std::string(slot), {{"slot", std::string(slot)}});
    }
  }
  std::string responses;
  for (std::size_t i = 0; i < c.responses.size(); ++i) {
    if (i) responses += '\n';
    responses += "Doctor " + std::to_string(i + 1) + ": " + c.responses[i].text;
  }
  // Case text could itself contain "{{...}}", so slots are filled in a fixed order
  // with the one-shot example first.
  std::string text(tmpl);
  replace_all(text, "{{one_shot}}", kOneShot);
  replace_all(text, "{{question}}", c.question);
  replace_all(text, "{{responses}}", responses);
  replace_all(text, "{{reference}}", c.reference_answer);

  for (std::size_t r = 0; r < prior_rounds.size(); ++r) {
    const auto& round = prior_rounds[r];
    text += "\n\nYour previous output (round " + std::to_string(r + 1) + "):\n" + round.llm_output;
    if (!round.retrieved.empty()) {
      text += "\nRetrieved knowledge:";
      for (std::size_t k = 0; k < round.retrieved.size(); ++k) {
        const auto& ch = round.retrieved[k];
        text += "\n[" + std::to_string(k + 1) + "] (" + ch.source_doc + ") " + ch.text;
      }
    }
  }
  if (!prior_rounds.empty()) text += "\n\nContinue with the evaluation.";

  RenderedPrompt out;
  out.words = split_words(text).size();
  out.approx_tokens = static_cast<std::size_t>(gateway::estimate_tokens(text));
  out.text = std::move(text);
  return out;
}

ChainResult run_chain(const EvalCase& c, const knowledge::VectorIndex* index, const knowledge::Embedder* embedder,
                      gateway::Gateway& gw, const ChainConfig& config) {
  config.validate();
  ChainTrace trace;
  trace.case_id = c.case_id;
  for (int t = 1; t <= config.max_rounds; ++t) {
    auto prompt = render_prompt(c, trace.rounds, config.prompt_template);
    if (prompt.approx_tokens > config.token_budget) {
      // Over budget: drop retrieved knowledge from the oldest rounds first.
      auto trimmed = trace.rounds;
      for (std::size_t r = 0; r < trimmed.size() && prompt.approx_tokens > config.token_budget; ++r) {
        while (!trimmed[r].retrieved.empty() && prompt.approx_tokens > config.token_budget) {
          trimmed[r].retrieved.pop_back();
          prompt = render_prompt(c, trimmed, config.prompt_template);
        }
      }
    }
    std::string output;
    try {
      output = gw.complete(gateway::user_request(gateway::Role::Evaluator, prompt.text, config.params));
    } catch (const Error& e) {
      throw ChainError(e.code(), std::string("evaluator call failed: ") + e.what(), trace);
    }
    ChainRound round{output, detect_query(output, config.marker), {}, prompt.approx_tokens};
    if (!round.query) {
      trace.rounds.push_back(std::move(round));
      try {
        auto eval = parse_evaluation(output, c.responses.size());
        trace.outcome = ChainOutcome::Evaluated;
        return {std::move(eval), std::move(trace)};
      } catch (const EvaluationParseError& e) {
        throw ChainError(Errc::ParseError, e.what(), std::move(trace));
      }
    }
    if (!index || !embedder || index->empty()) {
      trace.rounds.push_back(std::move(round));
      throw ChainError(Errc::EmptyIndex, "evaluator asked a question but no knowledge index is available",
                       std::move(trace));
    }
    for (const auto& hit : index->query(*round.query, config.top_k, *embedder)) {
      round.retrieved.push_back({hit.chunk->chunk_id, hit.chunk->source_doc, hit.similarity, hit.chunk->text});
    }
    trace.rounds.push_back(std::move(round));
  }
  trace.outcome = ChainOutcome::Unresolved;
  throw ChainError(Errc::Unresolved,
                   "no evaluation after " + std::to_string(config.max_rounds) + " rounds for case " + c.case_id,
                   std::move(trace));
}

SynthesisResult synthesize(const std::vector<EvalCase>& cases, Source source, const knowledge::VectorIndex* index,
                           const knowledge::Embedder* embedder, gateway::Gateway& gw, const ChainConfig& config,
                           std::size_t workers) {
  struct Slot {
    std::optional<ChainResult> ok;
    ChainTrace trace;
    json failure;
  };
  auto slots = parallel_map<Slot>(cases.size(), workers, [&](std::size_t i) {
    Slot s;
    try {
      s.ok = run_chain(cases[i], index, embedder, gw, config);
      s.trace = s.ok->trace;
    } catch (const ChainError& e) {
      s.trace = e.trace();
      s.failure = {{"case_id", cases[i].case_id}, {"error", std::string(medeval::to_string(e.code()))}, {"message", e.what()}};
    }
    return s;
  });
  SynthesisResult out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    out.traces.push_back(slots[i].trace);
    if (!slots[i].ok) {
      out.failures.push_back(slots[i].failure);
      continue;
    }
    InstructionRecord r;
    r.eval_case = cases[i];
    r.evaluation = std::move(slots[i].ok->evaluation);
    r.source = source;
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace medeval::chain
