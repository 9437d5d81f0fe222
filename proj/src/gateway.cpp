#include "medeval/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace medeval::gateway {

using nlohmann::json;

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::Evaluator: return "evaluator";
    case Role::Suggester: return "suggester";
    case Role::Judge: return "judge";
    case Role::Responder: return "responder";
  }
  return "?";
}

std::optional<Role> role_from_string(std::string_view s) {
  for (Role r : {Role::Evaluator, Role::Suggester, Role::Judge, Role::Responder}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

ChatRequest user_request(Role role, std::string prompt, GenerationParams params) {
  return ChatRequest{role, {{"user", std::move(prompt)}}, params};
}

int estimate_tokens(std::string_view text) {
  // Roughly 4/3 tokens per whitespace word for English prose.
  const auto words = split_words(text).size();
  return static_cast<int>((words * 4 + 2) / 3);
}

AttemptError AttemptError::from_status(int status, const std::string& body) {
  const bool transient = status == 408 || status == 429 || status >= 500;
  std::string msg = "backend returned HTTP " + std::to_string(status);
  if (!body.empty()) msg += ": " + body.substr(0, 200);
  return AttemptError(Errc::BackendError, status, transient, msg);
}

// --- ScriptedStub ------------------------------------------------------------

ScriptedStub::ScriptedStub(std::vector<Reply> script, std::string name)
    : script_(script.begin(), script.end()), name_(std::move(name)) {
  if (script_.empty()) throw Error(Errc::InvalidValue, "scripted stub needs at least one reply");
}

std::shared_ptr<ScriptedStub> ScriptedStub::of(std::vector<std::string> replies, std::string name) {
  std::vector<Reply> script;
  for (auto& r : replies) script.push_back(Reply::ok(std::move(r)));
  return std::make_shared<ScriptedStub>(std::move(script), std::move(name));
}

Completion ScriptedStub::send(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  requests_.push_back(request);
  if (script_.empty()) {
    throw Error(Errc::ScriptExhausted, "script '" + name_ + "' exhausted after " +
                                           std::to_string(requests_.size() - 1) + " replies");
  }
  Reply r = std::move(script_.front());
  script_.pop_front();
  if (r.timeout) throw AttemptError(Errc::Timeout, 0, true, "scripted timeout");
  if (r.status != 200) throw AttemptError::from_status(r.status);
  return {std::move(r.text), std::nullopt, std::nullopt};
}

std::vector<ChatRequest> ScriptedStub::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::size_t ScriptedStub::remaining() const {
  std::lock_guard lock(mu_);
  return script_.size();
}

// --- HttpBackend -------------------------------------------------------------

void BackendConfig::validate() const {
  if (kind != "http" && kind != "script") throw Error(Errc::ConfigError, "unknown backend kind '" + kind + "'");
  if (!(timeout_seconds > 0.0)) throw Error(Errc::ConfigError, "backend timeout must be > 0");
  if (max_retries < 0) throw Error(Errc::ConfigError, "backend retries must be >= 0");
  if (max_in_flight < 1) throw Error(Errc::ConfigError, "backend max_in_flight must be >= 1");
  default_params.validate();
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ep = config_.endpoint;
  const auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::ConfigError, "endpoint must include a scheme: " + ep);
  const auto path_start = ep.find('/', scheme_end + 3);
  base_url_ = ep.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : ep.substr(path_start);
}

json HttpBackend::build_body(const ChatRequest& request) const {
  json messages = json::array();
  for (const auto& m : request.messages) {
    const bool known = m.speaker == "system" || m.speaker == "user" || m.speaker == "assistant";
    messages.push_back({{"role", known ? m.speaker : "user"}, {"content", m.text}});
  }
  return json{{"model", config_.model},
              {"messages", messages},
              {"temperature", request.params.temperature},
              {"max_tokens", request.params.max_new_tokens},
              {"top_p", request.params.top_p},
              {"top_k", request.params.top_k}};
}

Completion HttpBackend::send(const ChatRequest& request) {
  httplib::Client client(base_url_);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!config_.token_env.empty()) {
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  auto res = client.Post(path_, headers, build_body(request).dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw AttemptError(Errc::Timeout, 0, true, "request to " + base_url_ + " timed out");
    }
    throw AttemptError(Errc::BackendError, 0, true, "request to " + base_url_ + " failed: " + httplib::to_string(err));
  }
  if (res->status != 200) throw AttemptError::from_status(res->status, res->body);
  try {
    const auto body = json::parse(res->body);
    Completion c;
    c.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
    if (auto u = body.find("usage"); u != body.end() && u->is_object()) {
      if (u->contains("prompt_tokens")) c.prompt_tokens = u->at("prompt_tokens").get<int>();
      if (u->contains("completion_tokens")) c.completion_tokens = u->at("completion_tokens").get<int>();
    }
    return c;
  } catch (const json::exception& e) {
    throw AttemptError(Errc::BackendError, res->status, false, std::string("malformed completion body: ") + e.what());
  }
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
  config.validate();
  if (config.kind == "script") {
    const auto j = json::parse(read_file(config.script_path));
    std::vector<ScriptedStub::Reply> script;
    for (const auto& item : j) {
      if (item.is_string()) {
        script.push_back(ScriptedStub::Reply::ok(item.get<std::string>()));
      } else {
        script.push_back({item.value("text", std::string{}), item.value("status", 200), item.value("timeout", false)});
      }
    }
    return std::make_shared<ScriptedStub>(std::move(script), config.script_path);
  }
  if (config.endpoint.empty()) throw Error(Errc::ConfigError, "http backend requires an endpoint");
  return std::make_shared<HttpBackend>(config);
}

// --- Gateway -----------------------------------------------------------------

Gateway::Gateway(std::uint64_t jitter_seed, Sleeper sleeper) : jitter_rng_(jitter_seed), sleeper_(std::move(sleeper)) {
  if (!sleeper_) {
    sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }
}

void Gateway::set_backend(Role role, std::shared_ptr<Backend> backend, RetryPolicy policy, std::size_t max_in_flight,
                          std::optional<GenerationParams> default_params) {
  if (!backend) throw Error(Errc::NoBackend, "null backend");
  if (max_in_flight < 1 || max_in_flight > 1024) throw Error(Errc::ConfigError, "max_in_flight must be in 1..1024");
  std::lock_guard lock(mu_);
  auto& slots = slots_[backend.get()];
  if (!slots) slots = std::make_shared<std::counting_semaphore<1024>>(static_cast<std::ptrdiff_t>(max_in_flight));
  routes_[role] = Route{std::move(backend), policy, slots, default_params.value_or(GenerationParams{})};
}

bool Gateway::has_backend(Role role) const {
  std::lock_guard lock(mu_);
  return routes_.count(role) > 0;
}

const Gateway::Route& Gateway::route(Role role) const {
  std::lock_guard lock(mu_);
  auto it = routes_.find(role);
  if (it == routes_.end()) {
    throw Error(Errc::NoBackend, "no backend configured for role " + std::string(to_string(role)));
  }
  return it->second;
}

GenerationParams Gateway::default_params(Role role) const {
  std::lock_guard lock(mu_);
  auto it = routes_.find(role);
  return it == routes_.end() ? GenerationParams{} : it->second.defaults;
}

double Gateway::jitter_draw() {
  std::lock_guard lock(mu_);
  return jitter_rng_.uniform01();
}

std::string Gateway::complete(const ChatRequest& request) {
  if (request.messages.empty()) throw Error(Errc::InvalidValue, "chat request has no messages");
  const Route& r = route(request.role);
  int prompt_tokens = 0;
  for (const auto& m : request.messages) prompt_tokens += estimate_tokens(m.text);

  const auto start = std::chrono::steady_clock::now();
  auto finish = [&](int attempts, std::string outcome, std::optional<int> pt, int ct) {
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(mu_);
    log_.push_back({request.role, r.backend->name(), attempts, ms, pt.value_or(prompt_tokens), ct, std::move(outcome)});
  };

  for (int attempt = 1;; ++attempt) {
    try {
      r.slots->acquire();
      Completion c;
      try {
        c = r.backend->send(request);
      } catch (...) {
        r.slots->release();
        throw;
      }
      r.slots->release();
      finish(attempt, "ok", c.prompt_tokens, c.completion_tokens.value_or(estimate_tokens(c.text)));
      return std::move(c.text);
    } catch (const AttemptError& e) {
      if (!e.transient() || attempt > r.policy.max_retries) {
        finish(attempt, std::string(medeval::to_string(e.code())), std::nullopt, 0);
        if (e.transient() && attempt > 1) {
          throw Error(Errc::RetriesExhausted,
                      "gave up after " + std::to_string(attempt) + " attempts: " + e.what(),
                      {{"attempts", attempt}, {"last_status", e.status()}});
        }
        throw;
      }
      const double u = jitter_draw();
      const double delay = r.policy.base_delay_seconds * std::pow(2.0, attempt - 1) *
                           (1.0 + r.policy.jitter * (2.0 * u - 1.0));
      {
        std::lock_guard lock(mu_);
        delays_.push_back(delay);
      }
      sleeper_(std::chrono::duration<double>(delay));
    } catch (const Error& e) {
      finish(attempt, std::string(medeval::to_string(e.code())), std::nullopt, 0);
      throw;
    }
  }
}

std::vector<CallRecord> Gateway::call_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::vector<double> Gateway::backoff_log() const {
  std::lock_guard lock(mu_);
  return delays_;
}

ModelResponse respond_medical(Gateway& gateway, const std::string& question, const std::string& model_label,
                              std::optional<GenerationParams> override_params) {
  const GenerationParams params = override_params.value_or(gateway.default_params(Role::Responder));
  params.validate();
  auto text = gateway.complete(user_request(Role::Responder, question, params));
  return ModelResponse{model_label, trim(text), params};
}

}  // namespace medeval::gateway
