#include "medeval/ingest.hpp"

#include <filesystem>

namespace medeval::ingest {

using nlohmann::json;

namespace {

std::string string_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return {};
  return it->get<std::string>();
}

}  // namespace

LoadResult load_qa(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(Errc::FileNotFound, "corpus not found: " + path.string(), {{"path", path.string()}});
  }
  LoadResult out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      out.rejects.push_back({line_no, std::string("invalid JSON: ") + e.what()});
      continue;
    }
    if (!j.is_object()) {
      out.rejects.push_back({line_no, "line is not a JSON object"});
      continue;
    }
    std::string question = string_field(j, "question");
    std::string answer = string_field(j, "answer");
    if (question.empty() && answer.empty()) {
      question = string_field(j, "input");
      if (is_blank(question)) question = string_field(j, "instruction");
      answer = string_field(j, "output");
    }
    if (is_blank(question) || is_blank(answer)) {
      out.rejects.push_back({line_no, "missing question or answer"});
      continue;
    }
    out.pairs.push_back({out.pairs.size(), std::move(question), std::move(answer)});
  }
  if (out.pairs.empty()) {
    throw Error(Errc::NoValidRecords, "no valid QA records in " + path.string(),
                {{"rejects", out.rejects.size()}});
  }
  return out;
}

std::vector<FilterRule> default_rules() {
  return {{"rephras", "model asked to rephrase text instead of answering"}};
}

std::vector<FilterRule> load_rules(const std::filesystem::path& path) {
  std::vector<FilterRule> rules;
  for (const auto& line : read_lines(path)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    rules.push_back({t, "from " + path.filename().string()});
  }
  if (rules.empty()) throw Error(Errc::InvalidValue, "rules file has no patterns: " + path.string());
  return rules;
}

json IngestReport::to_json() const {
  return json{{"total_in", total_in}, {"filtered_out", filtered_out}, {"kept", kept}, {"rule_hits", rule_hits}};
}

FilterResult apply_filter(const std::vector<QaPair>& pairs, const std::vector<FilterRule>& rules) {
  if (rules.empty()) throw Error(Errc::InvalidValue, "filter needs at least one rule");
  std::vector<std::string> patterns;
  for (const auto& r : rules) {
    if (r.pattern.empty()) throw Error(Errc::InvalidValue, "empty filter pattern");
    patterns.push_back(to_lower(r.pattern));
  }
  FilterResult out;
  out.report.total_in = pairs.size();
  for (const auto& p : patterns) out.report.rule_hits[p] = 0;
  for (const auto& pair : pairs) {
    const auto q = to_lower(pair.question);
    const auto a = to_lower(pair.answer);
    bool hit = false;
    for (const auto& p : patterns) {
      if (q.find(p) != std::string::npos || a.find(p) != std::string::npos) {
        ++out.report.rule_hits[p];
        hit = true;
      }
    }
    if (hit) {
      ++out.report.filtered_out;
    } else {
      out.kept.push_back(pair);
    }
  }
  out.report.kept = out.kept.size();
  return out;
}

std::vector<EvalCase> assemble_cases(const std::vector<QaPair>& pairs,
                                     const std::map<std::string, std::vector<ModelResponse>>& responder_outputs) {
  for (const auto& [label, responses] : responder_outputs) {
    if (responses.size() != pairs.size()) {
      throw Error(Errc::LengthMismatch,
                  "responder '" + label + "' has " + std::to_string(responses.size()) + " outputs for " +
                      std::to_string(pairs.size()) + " pairs",
                  {{"model_label", label}});
    }
  }
  std::vector<EvalCase> cases;
  cases.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EvalCase c;
    c.question = pairs[i].question;
    c.reference_answer = pairs[i].answer;
    // std::map iteration gives the stable label order.
    for (const auto& [label, responses] : responder_outputs) {
      ModelResponse r = responses[i];
      r.model_label = label;
      c.responses.push_back(std::move(r));
    }
    cases.push_back(validate_case(std::move(c)));
  }
  return cases;
}

std::vector<EvalCase> assemble_cases(const std::vector<QaPair>& pairs,
                                     const std::map<std::string, std::vector<std::string>>& responder_outputs) {
  std::map<std::string, std::vector<ModelResponse>> wrapped;
  for (const auto& [label, texts] : responder_outputs) {
    auto& list = wrapped[label];
    for (const auto& t : texts) list.push_back({label, t, std::nullopt});
  }
  return assemble_cases(pairs, wrapped);
}

}  // namespace medeval::ingest
