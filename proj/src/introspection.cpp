#include "medeval/introspection.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include "medeval/curriculum.hpp"

namespace medeval::introspection {

using nlohmann::json;

namespace {

std::vector<chain::RetrievedChunk> retrieve(const Retrieval& r, const std::string& text, std::size_t k) {
  std::vector<chain::RetrievedChunk> out;
  if (!r.index || !r.embedder || r.index->empty() || k == 0) return out;
  for (const auto& hit : r.index->query(text, k, *r.embedder)) {
    out.push_back({hit.chunk->chunk_id, hit.chunk->source_doc, hit.similarity, hit.chunk->text});
  }
  return out;
}

std::string scores_text(const std::vector<int>& scores) {
  std::string out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i) out += ", ";
    out += "Doctor " + std::to_string(i + 1) + ": " + std::to_string(scores[i]);
  }
  return out;
}

int sign(int v) { return (v > 0) - (v < 0); }

}  // namespace

std::string_view to_string(CorrectnessMode m) noexcept {
  return m == CorrectnessMode::RankMismatch ? "rank" : "exact";
}

CorrectnessMode correctness_from_string(std::string_view s) {
  if (s == "rank") return CorrectnessMode::RankMismatch;
  if (s == "exact") return CorrectnessMode::ExactMismatch;
  throw Error(Errc::ConfigError, "unknown correctness mode '" + std::string(s) + "' (rank|exact)");
}

bool same_ranking(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      if (sign(a[i] - a[j]) != sign(b[i] - b[j])) return false;
    }
  }
  return true;
}

bool is_correct(const std::vector<int>& predicted, const std::vector<int>& reference, CorrectnessMode mode) {
  return mode == CorrectnessMode::RankMismatch ? same_ranking(predicted, reference) : predicted == reference;
}

std::vector<std::string> EvaluateOutcome::incorrect_ids() const {
  std::vector<std::string> ids;
  for (const auto& c : incorrect) ids.push_back(c.record_id);
  return ids;
}

EvaluateOutcome evaluate_model(const std::vector<InstructionRecord>& records, gateway::Gateway& gw,
                               const Retrieval& retrieval, const chain::ChainConfig& config, CorrectnessMode mode,
                               std::size_t workers) {
  auto verdicts = parallel_map<std::optional<IncorrectCase>>(records.size(), workers, [&](std::size_t i) {
    const auto& rec = records[i];
    try {
      const auto result = chain::run_chain(rec.eval_case, retrieval.index, retrieval.embedder, gw, config);
      if (is_correct(result.evaluation.scores, rec.evaluation.scores, mode)) return std::optional<IncorrectCase>{};
      return std::optional<IncorrectCase>(IncorrectCase{
          rec.record_id(), mode == CorrectnessMode::RankMismatch ? "rank_mismatch" : "exact_mismatch",
          result.evaluation.scores});
    } catch (const Error& e) {
      return std::optional<IncorrectCase>(IncorrectCase{rec.record_id(), std::string(to_string(e.code())), std::nullopt});
    }
  });
  EvaluateOutcome out;
  out.evaluated = records.size();
  for (auto& v : verdicts) {
    if (v) out.incorrect.push_back(std::move(*v));
  }
  return out;
}

JudgeVerdict parse_judge_verdict(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && std::isspace(static_cast<unsigned char>(reply[i]))) ++i;
  std::string token;
  while (i < reply.size() && std::isalpha(static_cast<unsigned char>(reply[i]))) {
    token.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(reply[i]))));
    ++i;
  }
  if (token == "ACCEPT") return JudgeVerdict::Accept;
  if (token == "REJECT") return JudgeVerdict::Reject;
  return JudgeVerdict::Unparseable;
}

int JuryTicket::complete_rounds() const {
  std::set<int> suggested, judged;
  for (const auto& t : transcript) (t.speaker == "suggester" ? suggested : judged).insert(t.round);
  int n = 0;
  for (int r : suggested) n += judged.count(r) ? 1 : 0;
  return n;
}

std::optional<std::string> JuryTicket::final_suggestion() const {
  for (auto it = transcript.rbegin(); it != transcript.rend(); ++it) {
    if (it->speaker == "suggester") return it->text;
  }
  return std::nullopt;
}

void JuryTicket::validate() const {
  if (is_blank(ticket_id) || is_blank(record_id)) throw Error(Errc::BlankField, "jury ticket needs ids");
  for (const auto& t : transcript) {
    if (t.round < 1 || t.round > kMaxConsensusRounds) {
      throw Error(Errc::InvalidValue, "transcript round out of range in ticket " + ticket_id);
    }
    if (t.speaker != "suggester" && t.speaker != "judge") {
      throw Error(Errc::InvalidValue, "unknown transcript speaker '" + t.speaker + "'");
    }
  }
  if ((status == TicketStatus::Decided) != verdict.has_value()) {
    throw Error(Errc::InvalidValue, "ticket " + ticket_id + ": Decided iff a verdict is present");
  }
}

void to_json(json& j, const TranscriptTurn& v) { j = json{{"speaker", v.speaker}, {"round", v.round}, {"text", v.text}}; }

void from_json(const json& j, TranscriptTurn& v) {
  v.speaker = j.at("speaker").get<std::string>();
  v.round = j.at("round").get<int>();
  v.text = j.at("text").get<std::string>();
}

void to_json(json& j, const JuryVerdict& v) {
  j = json{{"accept", v.accept},
           {"revised_text", v.revised_text ? json(*v.revised_text) : json(nullptr)},
           {"juror", v.juror}};
}

void from_json(const json& j, JuryVerdict& v) {
  v.accept = j.at("accept").get<bool>();
  v.revised_text.reset();
  if (auto it = j.find("revised_text"); it != j.end() && !it->is_null()) {
    auto text = it->get<std::string>();
    if (!is_blank(text)) v.revised_text = std::move(text);
  }
  v.juror = j.value("juror", std::string{});
}

void to_json(json& j, const JuryTicket& v) {
  j = json{{"ticket_id", v.ticket_id},
           {"record_id", v.record_id},
           {"iteration", v.iteration},
           {"transcript", v.transcript},
           {"status", v.status == TicketStatus::Open ? "Open" : "Decided"},
           {"verdict", v.verdict ? json(*v.verdict) : json(nullptr)}};
}

void from_json(const json& j, JuryTicket& v) {
  v.ticket_id = j.at("ticket_id").get<std::string>();
  v.record_id = j.at("record_id").get<std::string>();
  v.iteration = j.value("iteration", 1);
  v.transcript = j.at("transcript").get<std::vector<TranscriptTurn>>();
  const auto status = j.value("status", std::string("Open"));
  if (status != "Open" && status != "Decided") throw Error(Errc::InvalidValue, "unknown ticket status '" + status + "'");
  v.status = status == "Open" ? TicketStatus::Open : TicketStatus::Decided;
  v.verdict.reset();
  if (auto it = j.find("verdict"); it != j.end() && !it->is_null()) v.verdict = it->get<JuryVerdict>();
  v.validate();
}

std::string make_ticket_id(const std::string& record_id, int iteration) {
  return "jt-" + std::to_string(iteration) + "-" + sha256_hex(record_id + "#" + std::to_string(iteration)).substr(0, 12);
}

std::string suggester_prompt(const InstructionRecord& record, const IncorrectCase& why,
                             const std::vector<chain::RetrievedChunk>& knowledge,
                             const std::vector<TranscriptTurn>& transcript) {
  std::string p =
      "You are a senior physician reviewing how an AI evaluator scored doctors' answers. "
      "The evaluator's scores disagree with the reference evaluation below. Write one concise revision "
      "suggestion that states the medical knowledge the evaluator missed.\n\n";
  p += chain::render_case_tuple(record.eval_case);
  p += "\n\nReference evaluation:\n" + record.evaluation.raw_text + "\n";
  if (why.predicted) p += "\nEvaluator scores: " + scores_text(*why.predicted) + "\n";
  p += "Reference scores: " + scores_text(record.evaluation.scores) + "\n";
  if (!knowledge.empty()) {
    p += "\nRelevant knowledge:\n";
    for (const auto& k : knowledge) p += "[" + std::to_string(k.chunk_id) + "] (" + k.source_doc + ") " + k.text + "\n";
  }
  for (const auto& t : transcript) {
    p += "\n" + std::string(t.speaker == "suggester" ? "Your suggestion" : "Judge") + " (round " +
         std::to_string(t.round) + "): " + t.text;
  }
  if (!transcript.empty()) p += "\n\nRevise your suggestion to address the judge's critique.";
  return p;
}

std::string judge_prompt(const InstructionRecord& record, const std::string& suggestion) {
  std::string p =
      "You are a medical judge. Decide whether the revision suggestion is medically correct and useful for "
      "correcting the evaluation. Reply with ACCEPT, or with REJECT followed by a short critique.\n\n";
  p += chain::render_case_tuple(record.eval_case);
  p += "\n\nEvaluation:\n" + record.evaluation.raw_text;
  p += "\n\nRevision suggestion:\n" + suggestion;
  return p;
}

ConsensusOutcome run_consensus(const InstructionRecord& record, const IncorrectCase& why, gateway::Gateway& gw,
                               const Retrieval& retrieval, const ConsensusConfig& config, int iteration) {
  const auto knowledge = retrieve(retrieval, record.eval_case.question, config.top_k);
  ConsensusOutcome out;
  for (int round = 1; round <= kMaxConsensusRounds; ++round) {
    auto suggestion = trim(gw.complete(gateway::user_request(
        gateway::Role::Suggester, suggester_prompt(record, why, knowledge, out.transcript), config.suggester_params)));
    out.transcript.push_back({"suggester", round, suggestion});
    const auto reply = trim(gw.complete(
        gateway::user_request(gateway::Role::Judge, judge_prompt(record, suggestion), config.judge_params)));
    out.transcript.push_back({"judge", round, reply});
    out.rounds = round;
    const auto verdict = parse_judge_verdict(reply);
    if (verdict == JudgeVerdict::Unparseable) ++out.unparseable_verdicts;
    if (verdict == JudgeVerdict::Accept) {
      out.accepted = Suggestion{suggestion, round, SuggestionVerdict::JudgeAccepted, SuggestionAuthor::Suggester};
      return out;
    }
  }
  out.ticket = JuryTicket{make_ticket_id(record.record_id(), iteration), record.record_id(), iteration, out.transcript,
                          TicketStatus::Open, std::nullopt};
  return out;
}

// --- JuryQueue ---------------------------------------------------------------

JuryQueue::JuryQueue(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_ / "verdicts");
}

void JuryQueue::open(const JuryTicket& ticket) {
  ticket.validate();
  std::lock_guard lock(mu_);
  const auto log = dir_ / "tickets.jsonl";
  if (std::filesystem::exists(log)) {
    for (const auto& line : read_lines(log)) {
      if (is_blank(line)) continue;
      if (json::parse(line).at("ticket_id").get<std::string>() == ticket.ticket_id) return;
    }
  }
  JuryTicket open_copy = ticket;
  open_copy.status = TicketStatus::Open;
  open_copy.verdict.reset();
  append_line_durable(log, json(open_copy).dump());
}

std::vector<JuryTicket> JuryQueue::tickets() const {
  std::lock_guard lock(mu_);
  std::vector<JuryTicket> out;
  const auto log = dir_ / "tickets.jsonl";
  if (!std::filesystem::exists(log)) return out;
  std::set<std::string> seen;
  const auto lines = read_lines(log);
  std::size_t line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    if (is_blank(line)) continue;
    JuryTicket t;
    try {
      t = json::parse(line).get<JuryTicket>();
    } catch (const json::exception& e) {
      // A torn final line from a crash is ignored; anything earlier is corruption.
      if (line_no == lines.size()) break;
      throw Error(Errc::IoError, log.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(t.ticket_id).second) continue;
    const auto vpath = dir_ / "verdicts" / (t.ticket_id + ".json");
    if (std::filesystem::exists(vpath)) {
      t.verdict = json::parse(read_file(vpath)).get<JuryVerdict>();
      t.status = TicketStatus::Decided;
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::optional<JuryTicket> JuryQueue::find(const std::string& ticket_id) const {
  for (auto& t : tickets()) {
    if (t.ticket_id == ticket_id) return t;
  }
  return std::nullopt;
}

JuryTicket JuryQueue::decide(const std::string& ticket_id, const JuryVerdict& verdict) {
  auto t = find(ticket_id);
  if (!t) throw Error(Errc::TicketNotFound, "no jury ticket " + ticket_id, {{"ticket_id", ticket_id}});
  if (t->status == TicketStatus::Decided) {
    throw Error(Errc::AlreadyDone, "jury ticket " + ticket_id + " is already decided", {{"ticket_id", ticket_id}});
  }
  if (t->complete_rounds() < kMaxConsensusRounds) {
    throw Error(Errc::TranscriptIncomplete,
                "jury ticket " + ticket_id + " has " + std::to_string(t->complete_rounds()) + " of 3 rounds",
                {{"ticket_id", ticket_id}, {"rounds", t->complete_rounds()}});
  }
  std::lock_guard lock(mu_);
  write_file_atomic(dir_ / "verdicts" / (ticket_id + ".json"), json(verdict).dump() + "\n");
  t->verdict = verdict;
  t->status = TicketStatus::Decided;
  return *t;
}

// --- records and state -------------------------------------------------------

std::vector<InstructionRecord> apply_suggestions(std::vector<InstructionRecord> records, const SuggestionMap& accepted) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < records.size(); ++i) pos[records[i].record_id()] = i;
  for (const auto& [id, list] : accepted) {
    auto it = pos.find(id);
    if (it == pos.end()) {
      throw Error(Errc::DanglingSuggestion, "suggestion for unknown record " + id, {{"record_id", id}});
    }
    auto& rec = records[it->second];
    for (const auto& s : list) {
      s.validate();
      rec.suggestions.push_back(s);
    }
  }
  return records;
}

void to_json(json& j, const IntrospectionState& v) {
  j = json{{"iteration", v.iteration},
           {"phase", v.phase == Phase::Idle ? "idle" : "awaiting_jury"},
           {"incorrect", v.incorrect},
           {"pending_tickets", v.pending_tickets},
           {"staged", v.staged},
           {"accepted", v.accepted},
           {"history", v.history}};
}

void from_json(const json& j, IntrospectionState& v) {
  v.iteration = j.at("iteration").get<int>();
  if (v.iteration < 1) throw Error(Errc::InvalidValue, "iteration must be >= 1");
  const auto phase = j.value("phase", std::string("idle"));
  if (phase != "idle" && phase != "awaiting_jury") throw Error(Errc::InvalidValue, "unknown phase '" + phase + "'");
  v.phase = phase == "idle" ? Phase::Idle : Phase::AwaitingJury;
  v.incorrect = j.value("incorrect", std::vector<std::string>{});
  v.pending_tickets = j.value("pending_tickets", std::vector<std::string>{});
  v.staged = j.value("staged", SuggestionMap{});
  v.accepted = j.value("accepted", SuggestionMap{});
  v.history = j.value("history", std::vector<json>{});
}

void IntrospectionState::save(const std::filesystem::path& path) const {
  write_file_atomic(path, json(*this).dump(2) + "\n");
}

IntrospectionState IntrospectionState::load(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path)).get<IntrospectionState>();
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidValue, path.string() + ": " + e.what());
  }
}

IterationResult run_iteration(const IntrospectionState& state, const std::vector<InstructionRecord>& base_records,
                              gateway::Gateway& gw, const Retrieval& retrieval, JuryQueue& jury,
                              const IterationOptions& options) {
  IterationResult result;
  IntrospectionState next = state;
  const auto current = apply_suggestions(base_records, state.accepted);

  if (state.phase == Phase::Idle) {
    const auto evaluated = evaluate_model(current, gw, retrieval, options.chain, options.mode, options.workers);
    std::map<std::string, const InstructionRecord*> by_id;
    for (const auto& r : current) by_id[r.record_id()] = &r;

    const auto outcomes = parallel_map<ConsensusOutcome>(
        evaluated.incorrect.size(), options.workers, [&](std::size_t i) {
          const auto& why = evaluated.incorrect[i];
          return run_consensus(*by_id.at(why.record_id), why, gw, retrieval, options.consensus, state.iteration);
        });

    next.incorrect = evaluated.incorrect_ids();
    next.staged.clear();
    next.pending_tickets.clear();
    int unparseable = 0;
    for (const auto& o : outcomes) unparseable += o.unparseable_verdicts;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const auto& o = outcomes[i];
      const auto& id = evaluated.incorrect[i].record_id;
      if (o.accepted) {
        next.staged[id].push_back(*o.accepted);
      } else if (o.ticket) {
        jury.open(*o.ticket);
        next.pending_tickets.push_back(o.ticket->ticket_id);
        result.opened_tickets.push_back(*o.ticket);
      }
    }
    next.history.push_back(json{{"iteration", state.iteration},
                                {"evaluated", evaluated.evaluated},
                                {"incorrect", next.incorrect.size()},
                                {"judge_accepted", next.staged.size()},
                                {"escalated", next.pending_tickets.size()},
                                {"unparseable_verdicts", unparseable}});
    next.phase = Phase::AwaitingJury;
  }

  // Jury merge.
  std::vector<std::string> still_open;
  int jury_accepted = 0, jury_rejected = 0, dropped = 0;
  for (const auto& tid : next.pending_tickets) {
    auto t = jury.find(tid);
    if (!t) throw Error(Errc::TicketNotFound, "state references unknown ticket " + tid, {{"ticket_id", tid}});
    if (t->status == TicketStatus::Open) {
      if (options.skip_jury) {
        ++dropped;
        continue;
      }
      still_open.push_back(tid);
      continue;
    }
    if (!t->verdict->accept) {
      ++jury_rejected;
      continue;
    }
    ++jury_accepted;
    if (t->verdict->revised_text) {
      next.staged[t->record_id].push_back(
          Suggestion{*t->verdict->revised_text, kMaxConsensusRounds, SuggestionVerdict::JuryAccepted, SuggestionAuthor::Jury});
    } else {
      next.staged[t->record_id].push_back(Suggestion{t->final_suggestion().value_or(""), kMaxConsensusRounds,
                                                     SuggestionVerdict::JuryAccepted, SuggestionAuthor::Suggester});
    }
  }
  if (!still_open.empty()) {
    if (state.phase == Phase::AwaitingJury) {
      throw Error(Errc::OpenJuryTickets, std::to_string(still_open.size()) + " jury ticket(s) still open",
                  {{"tickets", still_open}});
    }
    // First pass: persist the staged work and wait for the jury.
    result.status = IterationStatus::AwaitingJury;
    result.next = std::move(next);
    result.records = current;
    return result;
  }

  // Commit.
  const auto patched = apply_suggestions(current, next.staged);
  for (const auto& [id, list] : next.staged) {
    auto& dst = next.accepted[id];
    dst.insert(dst.end(), list.begin(), list.end());
  }
  std::set<std::string> touched;
  for (const auto& [id, list] : next.staged) touched.insert(id);
  for (const auto& r : patched) {
    if (touched.count(r.record_id())) result.refreshed.push_back(r);
  }
  std::sort(result.refreshed.begin(), result.refreshed.end(),
            [](const auto& a, const auto& b) { return a.record_id() < b.record_id(); });
  if (!next.history.empty()) {
    auto& h = next.history.back();
    h["jury_accepted"] = jury_accepted;
    h["jury_rejected"] = jury_rejected;
    h["jury_dropped"] = dropped;
    h["refreshed"] = result.refreshed.size();
  }
  next.staged.clear();
  next.pending_tickets.clear();
  next.phase = Phase::Idle;
  next.iteration = state.iteration + 1;
  result.status = IterationStatus::Completed;
  result.records = patched;
  result.next = std::move(next);
  return result;
}

json export_refresh(const IterationResult& result, const std::filesystem::path& out_dir, const json& provenance) {
  auto manifest = curriculum::export_stage("refresh", result.refreshed, out_dir, provenance);
  write_file_atomic(out_dir / "records.jsonl", to_jsonl(result.records));
  return manifest;
}

}  // namespace medeval::introspection
