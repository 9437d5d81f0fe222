#include "medeval/review.hpp"

#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>

namespace medeval::review {

using nlohmann::json;
using introspection::JuryTicket;
using introspection::TicketStatus;

std::string_view to_string(QueueKind k) noexcept {
  switch (k) {
    case QueueKind::Verification: return "verification";
    case QueueKind::Jury: return "jury";
    case QueueKind::Preference: return "preference";
  }
  return "?";
}

QueueKind queue_from_string(std::string_view s) {
  for (QueueKind k : {QueueKind::Verification, QueueKind::Jury, QueueKind::Preference}) {
    if (to_string(k) == s) return k;
  }
  throw Error(Errc::NotFound, "unknown queue '" + std::string(s) + "'");
}

std::int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json VerificationStats::to_json() const {
  return json{{"pass_rate", pass_rate}, {"failures", failures}, {"judgments", judgments},
              {"items_done", items_done}, {"approved", approved}, {"rejected", rejected}};
}

json PreferenceResults::to_json() const {
  auto row = [](const PreferenceTally& t) {
    return json{{"reviewer", t.reviewer}, {"n", t.n}, {"fraction_by_source", t.fraction_by_source}};
  };
  json per = json::array();
  for (const auto& t : per_reviewer) per.push_back(row(t));
  return json{{"per_reviewer", per}, {"pooled", row(pooled)}, {"items", items}};
}

namespace {

constexpr const char* kLog = "review.jsonl";

bool swap_candidates(const std::string& hash) {
  // Deterministic blinding: A/B order from the payload hash.
  return (std::stoi(hash.substr(0, 1), nullptr, 16) & 1) != 0;
}

void check_preference_payload(const json& p) {
  if (!p.is_object() || !p.contains("candidates") || !p.at("candidates").is_array() || p.at("candidates").size() != 2) {
    throw Error(Errc::InvalidPayload, "preference payload needs exactly two candidates");
  }
  std::set<std::string> sources;
  for (const auto& c : p.at("candidates")) {
    if (!c.is_object() || !c.contains("text") || !c.at("text").is_string() || is_blank(c.at("text").get<std::string>()) ||
        !c.contains("source") || !c.at("source").is_string() || is_blank(c.at("source").get<std::string>())) {
      throw Error(Errc::InvalidPayload, "each preference candidate needs non-blank text and source");
    }
    sources.insert(c.at("source").get<std::string>());
  }
  if (sources.size() != 2) throw Error(Errc::InvalidPayload, "preference candidates need distinct sources");
  if (p.contains("context") && !p.at("context").is_string()) throw Error(Errc::InvalidPayload, "context must be text");
}

}  // namespace

ReviewStore::ReviewStore(std::filesystem::path dir, StoreOptions options, Clock clock)
    : dir_(std::move(dir)), options_(options), clock_(std::move(clock)), jury_(dir_) {
  if (options_.reviews_required < 1 || options_.reviews_required > 2) {
    throw Error(Errc::ConfigError, "reviews_required must be 1 or 2");
  }
  if (!clock_) clock_ = system_now_ms;
  replay();
}

void ReviewStore::replay() {
  std::unique_lock lock(mu_);
  sync_jury_locked();
  const auto path = dir_ / kLog;
  if (!std::filesystem::exists(path)) return;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    json event;
    try {
      event = json::parse(lines[i]);
    } catch (const json::exception& e) {
      if (i + 1 == lines.size()) break;  // torn tail from a crash
      throw Error(Errc::IoError, path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    apply(event);
    seq_ = std::max(seq_, event.value("seq", std::size_t{0}));
  }
}

void ReviewStore::commit(json event) {
  event["seq"] = ++seq_;
  append_line_durable(dir_ / kLog, event.dump());
  apply(event);
}

void ReviewStore::sync_jury_locked() {
  for (const auto& t : jury_.tickets()) {
    auto& it = jury_items_[t.ticket_id];
    if (it.id.empty()) {
      it.id = t.ticket_id;
      it.kind = QueueKind::Jury;
      it.hash = sha256_hex(json(t).dump());
      order_.push_back("jury/" + t.ticket_id);
    }
    it.payload = json(t);
    it.done = t.status == TicketStatus::Decided;
  }
}

void ReviewStore::apply(const json& e) {
  const auto op = e.at("op").get<std::string>();
  const auto at = e.value("at", std::int64_t{0});
  if (op == "enqueue") {
    const auto kind = queue_from_string(e.at("kind").get<std::string>());
    Item it;
    it.id = e.at("item_id").get<std::string>();
    it.kind = kind;
    it.payload = e.at("payload");
    it.hash = e.at("hash").get<std::string>();
    it.created_at = at;
    it.reviews_required = e.value("reviews_required", 1);
    (kind == QueueKind::Verification ? verification_ : preference_)[it.id] = std::move(it);
    order_.push_back(std::string(to_string(kind)) + "/" + e.at("item_id").get<std::string>());
  } else if (op == "claim") {
    auto& it = item(queue_from_string(e.at("kind").get<std::string>()), e.at("item_id").get<std::string>());
    it.lease = Lease{e.at("reviewer").get<std::string>(), e.at("expires_at").get<std::int64_t>()};
  } else if (op == "decision") {
    auto& it = item(QueueKind::Verification, e.at("item_id").get<std::string>());
    Decision d;
    d.reviewer = e.at("reviewer").get<std::string>();
    d.criteria = e.at("criteria").get<Criteria>();
    if (auto n = e.find("note"); n != e.end() && !n->is_null()) d.note = n->get<std::string>();
    d.at = at;
    it.decisions.push_back(std::move(d));
    it.lease.reset();
    if (static_cast<int>(it.decisions.size()) >= it.reviews_required) it.done = true;
  } else if (op == "jury_verdict") {
    auto jt = jury_items_.find(e.at("item_id").get<std::string>());
    if (jt != jury_items_.end()) {
      jt->second.done = true;
      jt->second.lease.reset();
    }
  } else if (op == "choice") {
    auto& it = item(QueueKind::Preference, e.at("item_id").get<std::string>());
    it.choices.push_back({e.at("reviewer").get<std::string>(), e.at("choice").get<std::string>(),
                          e.value("permutation", std::string{}), e.value("notes", json::object()), at});
    it.lease.reset();
  } else if (op == "close_preference") {
    preference_closed_ = true;
    for (auto& [id, it] : preference_) it.done = true;
  } else {
    throw Error(Errc::IoError, "unknown review log op '" + op + "'");
  }
}

ReviewStore::Item& ReviewStore::item(QueueKind kind, const std::string& id) {
  auto& m = kind == QueueKind::Verification ? verification_ : kind == QueueKind::Preference ? preference_ : jury_items_;
  auto it = m.find(id);
  if (it == m.end()) {
    if (kind == QueueKind::Jury) throw Error(Errc::TicketNotFound, "no jury ticket " + id, {{"item_id", id}});
    throw Error(Errc::NotFound, "no " + std::string(to_string(kind)) + " item " + id, {{"item_id", id}});
  }
  return it->second;
}

const ReviewStore::Item* ReviewStore::find(QueueKind kind, const std::string& id) const {
  const auto& m = kind == QueueKind::Verification ? verification_ : kind == QueueKind::Preference ? preference_ : jury_items_;
  auto it = m.find(id);
  return it == m.end() ? nullptr : &it->second;
}

std::string ReviewStore::status_of(const Item& it) const {
  if (it.done) return "Done";
  if (it.lease && it.lease->expires_at > clock_()) return "Claimed";
  return "Open";
}

bool ReviewStore::lease_held_by_other(const Item& it, const std::string& reviewer) const {
  return it.lease && it.lease->expires_at > clock_() && it.lease->reviewer != reviewer;
}

json ReviewStore::view(const Item& it) const {
  json v{{"item_id", it.id}, {"kind", to_string(it.kind)}, {"status", status_of(it)}, {"created_at", it.created_at}};
  v["lease"] = status_of(it) == "Claimed" ? json{{"reviewer", it.lease->reviewer}, {"expires_at", it.lease->expires_at}}
                                          : json(nullptr);
  switch (it.kind) {
    case QueueKind::Verification: {
      v["record"] = it.payload;
      v["reviews"] = it.decisions.size();
      v["reviews_required"] = it.reviews_required;
      break;
    }
    case QueueKind::Jury:
      v["ticket"] = it.payload;
      break;
    case QueueKind::Preference: {
      const auto& c = it.payload.at("candidates");
      const bool swap = swap_candidates(it.hash);
      v["context"] = it.payload.value("context", std::string{});
      v["A"] = c.at(swap ? 1 : 0).at("text");
      v["B"] = c.at(swap ? 0 : 1).at("text");
      v["choices"] = it.choices.size();
      break;
    }
  }
  return v;
}

std::string ReviewStore::enqueue(QueueKind kind, const json& payload) {
  std::unique_lock lock(mu_);
  if (kind == QueueKind::Jury) {
    JuryTicket t;
    try {
      t = payload.get<JuryTicket>();
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidPayload, std::string("malformed jury ticket: ") + e.what());
    } catch (const Error& e) {
      throw Error(Errc::InvalidPayload, std::string("invalid jury ticket: ") + e.what());
    }
    jury_.open(t);
    sync_jury_locked();
    return t.ticket_id;
  }

  std::string id;
  if (kind == QueueKind::Verification) {
    InstructionRecord rec;
    try {
      rec = payload.get<InstructionRecord>();
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidPayload, std::string("malformed instruction record: ") + e.what());
    } catch (const Error& e) {
      throw Error(Errc::InvalidPayload, std::string("invalid instruction record: ") + e.what());
    }
    id = rec.record_id();
  } else {
    check_preference_payload(payload);
  }
  const auto hash = sha256_hex(payload.dump());
  if (kind == QueueKind::Preference) {
    if (preference_closed_) throw Error(Errc::ExperimentClosed, "preference experiment is closed");
    id = "p-" + hash.substr(0, 12);
  }
  if (const Item* existing = find(kind, id)) {
    if (existing->hash == hash) return id;
    throw Error(Errc::InvalidPayload, "item " + id + " already exists with a different payload", {{"item_id", id}});
  }
  commit(json{{"op", "enqueue"},
              {"kind", to_string(kind)},
              {"item_id", id},
              {"payload", payload},
              {"hash", hash},
              {"reviews_required", kind == QueueKind::Verification ? options_.reviews_required : 1},
              {"at", clock_()}});
  return id;
}

std::vector<json> ReviewStore::pending(QueueKind kind, const std::string& reviewer) const {
  if (kind == QueueKind::Jury) {
    std::unique_lock lock(mu_);
    const_cast<ReviewStore*>(this)->sync_jury_locked();
  }
  std::shared_lock lock(mu_);
  std::vector<json> out;
  const auto prefix = std::string(to_string(kind)) + "/";
  for (const auto& key : order_) {
    if (key.rfind(prefix, 0) != 0) continue;
    const Item* it = find(kind, key.substr(prefix.size()));
    if (!it || it->done) continue;
    if (!reviewer.empty()) {
      bool mine = false;
      for (const auto& d : it->decisions) mine = mine || d.reviewer == reviewer;
      for (const auto& c : it->choices) mine = mine || c.reviewer == reviewer;
      if (mine) continue;
    }
    out.push_back(view(*it));
  }
  return out;
}

json ReviewStore::counts(QueueKind kind) const {
  if (kind == QueueKind::Jury) {
    std::unique_lock lock(mu_);
    const_cast<ReviewStore*>(this)->sync_jury_locked();
  }
  std::shared_lock lock(mu_);
  const auto& m = kind == QueueKind::Verification ? verification_ : kind == QueueKind::Preference ? preference_ : jury_items_;
  std::size_t open = 0, claimed = 0, done = 0;
  for (const auto& [id, it] : m) {
    const auto s = status_of(it);
    (s == "Done" ? done : s == "Claimed" ? claimed : open)++;
  }
  return json{{"open", open}, {"claimed", claimed}, {"done", done}, {"total", m.size()}};
}

json ReviewStore::claim(QueueKind kind, const std::string& item_id, const std::string& reviewer) {
  std::unique_lock lock(mu_);
  if (kind == QueueKind::Jury) sync_jury_locked();
  auto& it = item(kind, item_id);
  if (it.done) throw Error(Errc::AlreadyDone, "item " + item_id + " is done", {{"item_id", item_id}});
  if (lease_held_by_other(it, reviewer)) {
    throw Error(Errc::LeaseHeld, "item " + item_id + " is claimed by another reviewer",
                {{"item_id", item_id}, {"expires_at", it.lease->expires_at}});
  }
  for (const auto& d : it.decisions) {
    if (d.reviewer == reviewer) throw Error(Errc::AlreadyDone, "reviewer already decided item " + item_id);
  }
  commit(json{{"op", "claim"},
              {"kind", to_string(kind)},
              {"item_id", item_id},
              {"reviewer", reviewer},
              {"expires_at", clock_() + options_.lease_ms},
              {"at", clock_()}});
  return view(it);
}

std::optional<VerificationState> ReviewStore::final_state(const Item& it) const {
  if (!it.done || it.decisions.empty()) return std::nullopt;
  // A criterion passes unless every reviewer failed it.
  Criteria merged{false, false, false};
  std::vector<std::string> reviewers, notes;
  for (const auto& d : it.decisions) {
    for (std::size_t c = 0; c < kCriteriaCount; ++c) merged[c] = merged[c] || d.criteria[c];
    reviewers.push_back(d.reviewer);
    if (d.note && !is_blank(*d.note)) notes.push_back(*d.note);
  }
  std::optional<std::string> note;
  if (!notes.empty()) note = join(notes, "; ");
  return VerificationState::decide(merged, join(reviewers, ","), note);
}

VerificationState ReviewStore::submit_verification(const std::string& item_id, const Criteria& criteria,
                                                   const std::string& reviewer, std::optional<std::string> note) {
  std::unique_lock lock(mu_);
  auto& it = item(QueueKind::Verification, item_id);
  if (it.done) throw Error(Errc::AlreadyDone, "item " + item_id + " is already decided", {{"item_id", item_id}});
  if (lease_held_by_other(it, reviewer)) {
    throw Error(Errc::NotClaimed, "item " + item_id + " is claimed by another reviewer", {{"item_id", item_id}});
  }
  for (const auto& d : it.decisions) {
    if (d.reviewer == reviewer) {
      throw Error(Errc::AlreadyDone, "reviewer " + reviewer + " already decided item " + item_id, {{"item_id", item_id}});
    }
  }
  commit(json{{"op", "decision"},
              {"item_id", item_id},
              {"reviewer", reviewer},
              {"criteria", criteria},
              {"note", note ? json(*note) : json(nullptr)},
              {"at", clock_()}});
  if (auto s = final_state(it)) return *s;
  // Dual review still waiting for the second reviewer.
  return VerificationState{};
}

JuryTicket ReviewStore::submit_jury_verdict(const std::string& ticket_id, bool accept,
                                            std::optional<std::string> revised_text, const std::string& juror) {
  std::unique_lock lock(mu_);
  sync_jury_locked();
  auto& it = item(QueueKind::Jury, ticket_id);
  if (lease_held_by_other(it, juror)) {
    throw Error(Errc::NotClaimed, "ticket " + ticket_id + " is claimed by another juror", {{"ticket_id", ticket_id}});
  }
  if (revised_text && is_blank(*revised_text)) revised_text.reset();
  auto decided = jury_.decide(ticket_id, introspection::JuryVerdict{accept, revised_text, juror});
  commit(json{{"op", "jury_verdict"},
              {"item_id", ticket_id},
              {"juror", juror},
              {"accept", accept},
              {"revised_text", revised_text ? json(*revised_text) : json(nullptr)},
              {"at", clock_()}});
  sync_jury_locked();
  return decided;
}

json ReviewStore::submit_preference(const std::string& item_id, const std::string& choice, const std::string& reviewer,
                                    const std::string& permutation, const json& notes) {
  std::unique_lock lock(mu_);
  if (preference_closed_) throw Error(Errc::ExperimentClosed, "preference experiment is closed");
  if (choice != "A" && choice != "B") throw Error(Errc::InvalidPayload, "choice must be A or B");
  if (!notes.is_object()) throw Error(Errc::InvalidPayload, "notes must be an object");
  auto& it = item(QueueKind::Preference, item_id);
  for (const auto& c : it.choices) {
    if (c.reviewer == reviewer) {
      throw Error(Errc::AlreadyDone, "reviewer " + reviewer + " already chose on item " + item_id, {{"item_id", item_id}});
    }
  }
  commit(json{{"op", "choice"},
              {"item_id", item_id},
              {"reviewer", reviewer},
              {"choice", choice},
              {"permutation", permutation},
              {"notes", notes},
              {"at", clock_()}});
  return view(it);
}

VerificationStats ReviewStore::verification_stats() const {
  std::shared_lock lock(mu_);
  VerificationStats s;
  for (const auto& [id, it] : verification_) {
    if (!it.done) continue;
    ++s.items_done;
    for (const auto& d : it.decisions) {
      ++s.judgments;
      for (std::size_t c = 0; c < kCriteriaCount; ++c) s.failures[c] += d.criteria[c] ? 0 : 1;
    }
    const auto st = final_state(it);
    (st->status == VerificationStatus::Approved ? s.approved : s.rejected)++;
  }
  if (s.items_done == 0) throw Error(Errc::NoDecisions, "no completed verification decisions");
  for (std::size_t c = 0; c < kCriteriaCount; ++c) {
    s.pass_rate[c] = 1.0 - static_cast<double>(s.failures[c]) / static_cast<double>(s.judgments);
  }
  return s;
}

PreferenceResults ReviewStore::results_locked() const {
  PreferenceResults r;
  std::map<std::string, std::map<std::string, std::size_t>> per;  // reviewer -> source -> wins
  std::map<std::string, std::size_t> per_n;
  std::map<std::string, std::size_t> pooled;
  std::set<std::string> all_sources;
  std::size_t pooled_n = 0;
  for (const auto& key : order_) {
    if (key.rfind("preference/", 0) != 0) continue;
    const auto& it = preference_.at(key.substr(11));
    const auto& c = it.payload.at("candidates");
    const bool swap = swap_candidates(it.hash);
    const auto a_src = c.at(swap ? 1 : 0).at("source").get<std::string>();
    const auto b_src = c.at(swap ? 0 : 1).at("source").get<std::string>();
    all_sources.insert(a_src);
    all_sources.insert(b_src);
    json choices = json::array();
    for (const auto& ch : it.choices) {
      const auto& src = ch.choice == "A" ? a_src : b_src;
      per[ch.reviewer][src]++;
      per_n[ch.reviewer]++;
      pooled[src]++;
      ++pooled_n;
      choices.push_back({{"reviewer", ch.reviewer}, {"choice", ch.choice}, {"source", src}, {"permutation", ch.permutation}});
    }
    r.items.push_back({{"item_id", it.id}, {"A_source", a_src}, {"B_source", b_src}, {"choices", choices}});
  }
  auto tally = [&](const std::string& who, std::size_t n, const std::map<std::string, std::size_t>& wins) {
    PreferenceTally t{who, n, {}};
    for (const auto& s : all_sources) {
      auto w = wins.find(s);
      t.fraction_by_source[s] = n == 0 ? 0.0 : static_cast<double>(w == wins.end() ? 0 : w->second) / static_cast<double>(n);
    }
    return t;
  };
  for (const auto& [who, wins] : per) r.per_reviewer.push_back(tally(who, per_n[who], wins));
  r.pooled = tally("", pooled_n, pooled);
  return r;
}

PreferenceResults ReviewStore::close_preference() {
  std::unique_lock lock(mu_);
  if (!preference_closed_) commit(json{{"op", "close_preference"}, {"at", clock_()}});
  return results_locked();
}

PreferenceResults ReviewStore::preference_results() const {
  std::shared_lock lock(mu_);
  if (!preference_closed_) throw Error(Errc::ExperimentOpen, "preference experiment is still open");
  return results_locked();
}

bool ReviewStore::preference_closed() const {
  std::shared_lock lock(mu_);
  return preference_closed_;
}

std::vector<InstructionRecord> ReviewStore::decided_records() const {
  std::shared_lock lock(mu_);
  std::vector<InstructionRecord> out;
  for (const auto& key : order_) {
    if (key.rfind("verification/", 0) != 0) continue;
    const auto& it = verification_.at(key.substr(13));
    const auto st = final_state(it);
    if (!st) continue;
    auto rec = it.payload.get<InstructionRecord>();
    rec.verification = *st;
    out.push_back(std::move(rec));
  }
  return out;
}

std::size_t ReviewStore::events() const {
  std::shared_lock lock(mu_);
  return seq_;
}

std::map<std::string, std::string> load_tokens(const std::filesystem::path& path) {
  std::map<std::string, std::string> tokens;
  std::size_t line_no = 0;
  for (const auto& raw : read_lines(path)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto words = split_words(line);
    if (words.size() != 2) {
      throw Error(Errc::ConfigError, path.string() + ":" + std::to_string(line_no) + ": expected 'reviewer_id token'");
    }
    if (!tokens.emplace(words[1], words[0]).second) {
      throw Error(Errc::ConfigError, path.string() + ":" + std::to_string(line_no) + ": duplicate token");
    }
  }
  return tokens;
}

// --- HTTP --------------------------------------------------------------------

struct ReviewServer::Impl {
  ReviewStore& store;
  std::map<std::string, std::string> tokens;
  httplib::Server server;
  std::thread thread;

  Impl(ReviewStore& s, std::map<std::string, std::string> t) : store(s), tokens(std::move(t)) { routes(); }

  static int http_status(Errc code) {
    switch (code) {
      case Errc::Unauthorized: return 401;
      case Errc::NotFound:
      case Errc::TicketNotFound: return 404;
      case Errc::InvalidPayload:
      case Errc::InvalidValue: return 400;
      case Errc::AlreadyDone:
      case Errc::NotClaimed:
      case Errc::LeaseHeld:
      case Errc::TranscriptIncomplete:
      case Errc::ExperimentOpen:
      case Errc::ExperimentClosed:
      case Errc::NoDecisions: return 409;
      default: return 500;
    }
  }

  std::string reviewer(const httplib::Request& req) const {
    const auto auth = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (auth.rfind(prefix, 0) == 0) {
      auto it = tokens.find(auth.substr(prefix.size()));
      if (it != tokens.end()) return it->second;
    }
    throw Error(Errc::Unauthorized, "missing or unknown reviewer token");
  }

  static json body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidPayload, std::string("request body is not JSON: ") + e.what());
    }
  }

  template <typename F>
  httplib::Server::Handler wrap(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto who = reviewer(req);
        res.set_content(f(req, who).dump(), "application/json");
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(e.to_json().dump(), "application/json");
      } catch (const json::exception& e) {
        res.status = 400;
        res.set_content(Error(Errc::InvalidPayload, e.what()).to_json().dump(), "application/json");
      }
    };
  }

  void routes() {
    const std::string q = "(verification|jury|preference)";
    server.Get("/api/" + q + "/pending", wrap([this](const httplib::Request& req, const std::string& who) {
                 const auto kind = queue_from_string(req.matches[1].str());
                 return json{{"items", store.pending(kind, who)}, {"counts", store.counts(kind)}};
               }));
    server.Post("/api/" + q + "/items", wrap([this](const httplib::Request& req, const std::string&) {
                  const auto kind = queue_from_string(req.matches[1].str());
                  return json{{"item_id", store.enqueue(kind, body(req))}};
                }));
    server.Post("/api/" + q + "/([^/]+)/claim", wrap([this](const httplib::Request& req, const std::string& who) {
                  return store.claim(queue_from_string(req.matches[1].str()), req.matches[2].str(), who);
                }));
    server.Post("/api/verification/([^/]+)/decision", wrap([this](const httplib::Request& req, const std::string& who) {
                  const auto b = body(req);
                  const auto& c = b.at("criteria");
                  if (!c.is_array() || c.size() != kCriteriaCount) {
                    throw Error(Errc::InvalidPayload, "criteria must be three booleans");
                  }
                  std::optional<std::string> note;
                  if (b.contains("note") && !b.at("note").is_null()) note = b.at("note").get<std::string>();
                  const auto st = store.submit_verification(req.matches[1].str(), c.get<Criteria>(), who, note);
                  return json{{"item_id", req.matches[1].str()}, {"verification", st}};
                }));
    server.Post("/api/jury/([^/]+)/verdict", wrap([this](const httplib::Request& req, const std::string& who) {
                  const auto b = body(req);
                  std::optional<std::string> text;
                  if (b.contains("revised_text") && !b.at("revised_text").is_null()) {
                    text = b.at("revised_text").get<std::string>();
                  }
                  return json(store.submit_jury_verdict(req.matches[1].str(), b.at("accept").get<bool>(), text, who));
                }));
    server.Post("/api/preference/close", wrap([this](const httplib::Request&, const std::string&) {
                  return store.close_preference().to_json();
                }));
    server.Get("/api/preference/results", wrap([this](const httplib::Request&, const std::string&) {
                 return store.preference_results().to_json();
               }));
    server.Post("/api/preference/([^/]+)/choice", wrap([this](const httplib::Request& req, const std::string& who) {
                  const auto b = body(req);
                  return store.submit_preference(req.matches[1].str(), b.at("choice").get<std::string>(), who,
                                                 b.value("permutation", std::string{}), b.value("notes", json::object()));
                }));
    server.Get("/api/stats", wrap([this](const httplib::Request&, const std::string&) {
                 json out{{"queues",
                           {{"verification", store.counts(QueueKind::Verification)},
                            {"jury", store.counts(QueueKind::Jury)},
                            {"preference", store.counts(QueueKind::Preference)}}},
                          {"preference_closed", store.preference_closed()}};
                 try {
                   out["verification"] = store.verification_stats().to_json();
                 } catch (const Error& e) {
                   if (e.code() != Errc::NoDecisions) throw;
                   out["verification"] = nullptr;
                 }
                 return out;
               }));
    server.Get("/api/verification/decided", wrap([this](const httplib::Request&, const std::string&) {
                 return json{{"records", store.decided_records()}};
               }));
  }
};

ReviewServer::ReviewServer(ReviewStore& store, std::map<std::string, std::string> tokens)
    : impl_(std::make_unique<Impl>(store, std::move(tokens))) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ReviewServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error(Errc::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace medeval::review
