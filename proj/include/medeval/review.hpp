#pragma once
// Human review queues: reliability verification, jury adjudication and the
// double-blind preference experiment.
//
// All state lives in one queue directory:
//   review.jsonl      append-only event log; replaying it rebuilds the store
//   tickets.jsonl     jury tickets opened by the introspection loop
//   verdicts/*.json   jury verdicts, read back by the introspection loop

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medeval/introspection.hpp"
#include "medeval/model.hpp"

namespace medeval::review {

enum class QueueKind { Verification, Jury, Preference };
std::string_view to_string(QueueKind k) noexcept;
QueueKind queue_from_string(std::string_view s);

// Milliseconds since the Unix epoch.
using Clock = std::function<std::int64_t()>;
std::int64_t system_now_ms();

struct StoreOptions {
  std::int64_t lease_ms = 30 * 60 * 1000;
  int reviews_required = 1;  // 2 enables dual review of verification items
};

struct VerificationStats {
  std::array<double, kCriteriaCount> pass_rate{};
  std::array<std::size_t, kCriteriaCount> failures{};
  std::size_t judgments = 0;  // individual reviewer decisions
  std::size_t items_done = 0;
  std::size_t approved = 0;
  std::size_t rejected = 0;

  nlohmann::json to_json() const;
};

struct PreferenceTally {
  std::string reviewer;  // empty for the pooled row
  std::size_t n = 0;
  std::map<std::string, double> fraction_by_source;
};

struct PreferenceResults {
  std::vector<PreferenceTally> per_reviewer;
  PreferenceTally pooled;
  std::vector<nlohmann::json> items;  // unblinded item mapping with choices

  nlohmann::json to_json() const;
};

class ReviewStore {
 public:
  ReviewStore(std::filesystem::path dir, StoreOptions options = {}, Clock clock = system_now_ms);

  // Verification payload: an InstructionRecord (item id = record id).
  // Preference payload: {"context": text?, "candidates": [{"text", "source"}, {"text", "source"}]}.
  // Jury payload: a JuryTicket, opened in the shared jury queue.
  // Re-enqueueing an identical payload returns the existing id.
  std::string enqueue(QueueKind kind, const nlohmann::json& payload);

  // Client views; preference views never contain sources before close.
  std::vector<nlohmann::json> pending(QueueKind kind, const std::string& reviewer = {}) const;
  nlohmann::json counts(QueueKind kind) const;
  nlohmann::json claim(QueueKind kind, const std::string& item_id, const std::string& reviewer);

  VerificationState submit_verification(const std::string& item_id, const Criteria& criteria,
                                        const std::string& reviewer, std::optional<std::string> note = std::nullopt);
  introspection::JuryTicket submit_jury_verdict(const std::string& ticket_id, bool accept,
                                                std::optional<std::string> revised_text, const std::string& juror);
  nlohmann::json submit_preference(const std::string& item_id, const std::string& choice, const std::string& reviewer,
                                   const std::string& permutation = {}, const nlohmann::json& notes = nlohmann::json::object());

  VerificationStats verification_stats() const;
  PreferenceResults close_preference();
  PreferenceResults preference_results() const;
  bool preference_closed() const;

  // Verification records whose review is complete, with the final state set.
  std::vector<InstructionRecord> decided_records() const;

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::size_t events() const;

 private:
  struct Decision {
    std::string reviewer;
    Criteria criteria{};
    std::optional<std::string> note;
    std::int64_t at = 0;
  };
  struct Choice {
    std::string reviewer;
    std::string choice;
    std::string permutation;
    nlohmann::json notes;
    std::int64_t at = 0;
  };
  struct Lease {
    std::string reviewer;
    std::int64_t expires_at = 0;
  };
  struct Item {
    std::string id;
    QueueKind kind = QueueKind::Verification;
    nlohmann::json payload;
    std::string hash;
    std::int64_t created_at = 0;
    int reviews_required = 1;
    std::optional<Lease> lease;
    std::vector<Decision> decisions;
    std::vector<Choice> choices;
    bool done = false;
  };

  void replay();
  void commit(nlohmann::json event);
  void apply(const nlohmann::json& event);

  Item& item(QueueKind kind, const std::string& id);
  const Item* find(QueueKind kind, const std::string& id) const;
  std::string status_of(const Item& it) const;
  bool lease_held_by_other(const Item& it, const std::string& reviewer) const;
  nlohmann::json view(const Item& it) const;
  std::optional<VerificationState> final_state(const Item& it) const;
  PreferenceResults results_locked() const;
  void sync_jury_locked();

  std::filesystem::path dir_;
  StoreOptions options_;
  Clock clock_;
  introspection::JuryQueue jury_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Item> verification_;
  std::map<std::string, Item> preference_;
  std::map<std::string, Item> jury_items_;
  std::vector<std::string> order_;  // enqueue order across queues, "kind/id"
  bool preference_closed_ = false;
  std::size_t seq_ = 0;
};

// Reviewer tokens: one "reviewer_id token" pair per line; '#' comments.
std::map<std::string, std::string> load_tokens(const std::filesystem::path& path);

class ReviewServer {
 public:
  // tokens maps bearer token -> reviewer id.
  ReviewServer(ReviewStore& store, std::map<std::string, std::string> tokens);
  ~ReviewServer();

  // Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace medeval::review
