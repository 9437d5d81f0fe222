#pragma once
// Iterative knowledge introspection.
//
// Each iteration re-evaluates the instruction set with the current evaluator,
// runs a suggester/judge consensus for every mis-evaluated record (at most
// three rounds, then a human jury), patches accepted suggestions into the
// training targets and exports a refresh manifest.

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medeval/chain.hpp"
#include "medeval/gateway.hpp"
#include "medeval/knowledge.hpp"
#include "medeval/model.hpp"

namespace medeval::introspection {

inline constexpr int kMaxConsensusRounds = 3;

enum class CorrectnessMode { RankMismatch, ExactMismatch };
std::string_view to_string(CorrectnessMode m) noexcept;
CorrectnessMode correctness_from_string(std::string_view s);

// True iff every pairwise comparison (<, =, >) agrees.
bool same_ranking(const std::vector<int>& a, const std::vector<int>& b);
bool is_correct(const std::vector<int>& predicted, const std::vector<int>& reference, CorrectnessMode mode);

struct IncorrectCase {
  std::string record_id;
  std::string reason;  // "rank_mismatch", "exact_mismatch" or an error code
  std::optional<std::vector<int>> predicted;
};

struct EvaluateOutcome {
  std::vector<IncorrectCase> incorrect;  // input order
  std::size_t evaluated = 0;
  std::vector<std::string> incorrect_ids() const;
};

struct Retrieval {
  const knowledge::VectorIndex* index = nullptr;
  const knowledge::Embedder* embedder = nullptr;
};

EvaluateOutcome evaluate_model(const std::vector<InstructionRecord>& records, gateway::Gateway& gw,
                               const Retrieval& retrieval, const chain::ChainConfig& config,
                               CorrectnessMode mode = CorrectnessMode::RankMismatch, std::size_t workers = 1);

struct TranscriptTurn {
  std::string speaker;  // "suggester" or "judge"
  int round = 1;
  std::string text;
  bool operator==(const TranscriptTurn&) const = default;
};

enum class JudgeVerdict { Accept, Reject, Unparseable };
// Leading ACCEPT/REJECT token, case-insensitive, trailing punctuation ignored.
JudgeVerdict parse_judge_verdict(std::string_view reply);

struct JuryVerdict {
  bool accept = false;
  std::optional<std::string> revised_text;
  std::string juror;
  bool operator==(const JuryVerdict&) const = default;
};

enum class TicketStatus { Open, Decided };

struct JuryTicket {
  std::string ticket_id;
  std::string record_id;
  int iteration = 1;
  std::vector<TranscriptTurn> transcript;
  TicketStatus status = TicketStatus::Open;
  std::optional<JuryVerdict> verdict;

  // Rounds in which both the suggester and the judge spoke.
  int complete_rounds() const;
  std::optional<std::string> final_suggestion() const;
  void validate() const;
  bool operator==(const JuryTicket&) const = default;
};

void to_json(nlohmann::json& j, const TranscriptTurn& v);
void from_json(const nlohmann::json& j, TranscriptTurn& v);
void to_json(nlohmann::json& j, const JuryVerdict& v);
void from_json(const nlohmann::json& j, JuryVerdict& v);
void to_json(nlohmann::json& j, const JuryTicket& v);
void from_json(const nlohmann::json& j, JuryTicket& v);

std::string make_ticket_id(const std::string& record_id, int iteration);

struct ConsensusConfig {
  std::size_t top_k = knowledge::kDefaultTopK;
  GenerationParams suggester_params{0.5, 512, 50, 1.0};
  GenerationParams judge_params{0.0, 256, 50, 1.0};
};

struct ConsensusOutcome {
  std::optional<Suggestion> accepted;
  std::optional<JuryTicket> ticket;
  std::vector<TranscriptTurn> transcript;
  int rounds = 0;
  int unparseable_verdicts = 0;
};

std::string suggester_prompt(const InstructionRecord& record, const IncorrectCase& why,
                             const std::vector<chain::RetrievedChunk>& knowledge,
                             const std::vector<TranscriptTurn>& transcript);
std::string judge_prompt(const InstructionRecord& record, const std::string& suggestion);

ConsensusOutcome run_consensus(const InstructionRecord& record, const IncorrectCase& why, gateway::Gateway& gw,
                               const Retrieval& retrieval, const ConsensusConfig& config, int iteration);

// Shared with the review service:
//   <dir>/tickets.jsonl        append-only log of opened tickets
//   <dir>/verdicts/<id>.json   one verdict per decided ticket, written atomically
class JuryQueue {
 public:
  explicit JuryQueue(std::filesystem::path dir);

  // Idempotent on ticket_id.
  void open(const JuryTicket& ticket);
  // Tickets in log order with any verdict merged in.
  std::vector<JuryTicket> tickets() const;
  std::optional<JuryTicket> find(const std::string& ticket_id) const;
  // TicketNotFound, TranscriptIncomplete, AlreadyDone.
  JuryTicket decide(const std::string& ticket_id, const JuryVerdict& verdict);

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

using SuggestionMap = std::map<std::string, std::vector<Suggestion>>;

// Appends each record's suggestions; records without suggestions are returned
// unchanged. Unknown record ids throw DanglingSuggestion.
std::vector<InstructionRecord> apply_suggestions(std::vector<InstructionRecord> records, const SuggestionMap& accepted);

enum class Phase { Idle, AwaitingJury };

struct IntrospectionState {
  int iteration = 1;
  Phase phase = Phase::Idle;
  std::vector<std::string> incorrect;          // current iteration
  std::vector<std::string> pending_tickets;    // current iteration
  SuggestionMap staged;                        // accepted this iteration, not yet committed
  SuggestionMap accepted;                      // committed across all iterations
  std::vector<nlohmann::json> history;         // one summary per completed iteration

  bool operator==(const IntrospectionState&) const = default;
  void save(const std::filesystem::path& path) const;
  static IntrospectionState load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const IntrospectionState& v);
void from_json(const nlohmann::json& j, IntrospectionState& v);

struct IterationOptions {
  CorrectnessMode mode = CorrectnessMode::RankMismatch;
  chain::ChainConfig chain;
  ConsensusConfig consensus;
  bool skip_jury = false;
  std::size_t workers = 1;
};

enum class IterationStatus { Completed, AwaitingJury };

struct IterationResult {
  IterationStatus status = IterationStatus::Completed;
  IntrospectionState next;
  // Records patched this iteration (refresh manifest content), id order.
  std::vector<InstructionRecord> refreshed;
  // The full current record set R with every committed suggestion applied.
  std::vector<InstructionRecord> records;
  std::vector<JuryTicket> opened_tickets;
};

// base_records is the iteration-invariant input; the current set is
// base_records with state.accepted applied. A state in AwaitingJury resumes at
// the jury merge without re-running evaluation or consensus.
IterationResult run_iteration(const IntrospectionState& state, const std::vector<InstructionRecord>& base_records,
                              gateway::Gateway& gw, const Retrieval& retrieval, JuryQueue& jury,
                              const IterationOptions& options);

// Writes refresh.jsonl, manifest.json and records.jsonl under out_dir.
nlohmann::json export_refresh(const IterationResult& result, const std::filesystem::path& out_dir,
                              const nlohmann::json& provenance = nlohmann::json::object());

}  // namespace medeval::introspection
