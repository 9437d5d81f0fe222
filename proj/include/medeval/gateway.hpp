#pragma once
// Chat-completion access for every LLM role.
//
// Backends perform a single attempt; the Gateway adds per-backend
// concurrency limits, retry with jittered exponential backoff, and a call log.
// ScriptedStub and FunctionBackend make every pipeline stage runnable offline.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "medeval/error.hpp"
#include "medeval/model.hpp"

namespace medeval::gateway {

enum class Role { Evaluator, Suggester, Judge, Responder };
std::string_view to_string(Role r) noexcept;
std::optional<Role> role_from_string(std::string_view s);

struct ChatMessage {
  std::string speaker;  // "system", "user" or "assistant"
  std::string text;
  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  Role role = Role::Evaluator;
  std::vector<ChatMessage> messages;
  GenerationParams params;
  bool operator==(const ChatRequest&) const = default;
};

ChatRequest user_request(Role role, std::string prompt, GenerationParams params = {});

struct Completion {
  std::string text;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

// One failed attempt. Transient failures (timeouts, connection errors, 408,
// 429, 5xx) are retried by the Gateway; the rest surface immediately.
class AttemptError : public Error {
 public:
  AttemptError(Errc code, int status, bool transient, const std::string& message)
      : Error(code, message, {{"status", status}}), status_(status), transient_(transient) {}
  int status() const noexcept { return status_; }
  bool transient() const noexcept { return transient_; }

  static AttemptError from_status(int status, const std::string& body = {});

 private:
  int status_;
  bool transient_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion send(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Replays canned replies in order and records every request verbatim.
class ScriptedStub final : public Backend {
 public:
  struct Reply {
    std::string text;
    int status = 200;  // non-200 makes the attempt fail with that status
    bool timeout = false;

    static Reply ok(std::string text) { return {std::move(text), 200, false}; }
    static Reply failure(int status) { return {{}, status, false}; }
    static Reply timed_out() { return {{}, 0, true}; }
  };

  explicit ScriptedStub(std::vector<Reply> script, std::string name = "stub");
  static std::shared_ptr<ScriptedStub> of(std::vector<std::string> replies, std::string name = "stub");

  Completion send(const ChatRequest& request) override;
  std::string name() const override { return name_; }

  std::vector<ChatRequest> requests() const;
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::deque<Reply> script_;
  std::vector<ChatRequest> requests_;
  std::string name_;
};

// Deterministic programmatic backend; the reply is a pure function of the request.
class FunctionBackend final : public Backend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  FunctionBackend(Fn fn, std::string name) : fn_(std::move(fn)), name_(std::move(name)) {}
  Completion send(const ChatRequest& request) override { return {fn_(request), std::nullopt, std::nullopt}; }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

struct BackendConfig {
  std::string kind = "http";  // "http" or "script"
  std::string endpoint;       // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  std::string token_env;      // name of the env var holding the bearer token
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int max_in_flight = 4;
  std::string script_path;    // kind == "script": JSON array of replies
  GenerationParams default_params;

  void validate() const;
};

// POSTs chat-completions JSON: {model, messages[{role, content}], temperature,
// max_tokens, top_p, top_k}; reads choices[0].message.content and usage.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);
  Completion send(const ChatRequest& request) override;
  std::string name() const override { return config_.endpoint; }

  nlohmann::json build_body(const ChatRequest& request) const;

 private:
  BackendConfig config_;
  std::string base_url_;
  std::string path_;
};

std::shared_ptr<Backend> make_backend(const BackendConfig& config);

struct RetryPolicy {
  int max_retries = 3;  // attempts = 1 + max_retries
  double base_delay_seconds = 0.5;
  double jitter = 0.2;  // +-20%
};

struct CallRecord {
  Role role = Role::Evaluator;
  std::string backend;
  int attempts = 0;
  double latency_ms = 0.0;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  std::string outcome;  // "ok" or the error code
};

class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;

  explicit Gateway(std::uint64_t jitter_seed = 0, Sleeper sleeper = {});

  void set_backend(Role role, std::shared_ptr<Backend> backend, RetryPolicy policy = {},
                   std::size_t max_in_flight = 4, std::optional<GenerationParams> default_params = std::nullopt);
  bool has_backend(Role role) const;
  GenerationParams default_params(Role role) const;

  std::string complete(const ChatRequest& request);

  std::vector<CallRecord> call_log() const;
  // Delays requested between attempts, in order (for tests and audit).
  std::vector<double> backoff_log() const;

 private:
  struct Route {
    std::shared_ptr<Backend> backend;
    RetryPolicy policy;
    std::shared_ptr<std::counting_semaphore<1024>> slots;
    GenerationParams defaults;
  };
  const Route& route(Role role) const;
  double jitter_draw();

  mutable std::mutex mu_;
  std::map<Role, Route> routes_;
  std::map<const Backend*, std::shared_ptr<std::counting_semaphore<1024>>> slots_;
  std::vector<CallRecord> log_;
  std::vector<double> delays_;
  DeterministicRng jitter_rng_;
  Sleeper sleeper_;
};

// Asks the Responder backend to answer a patient question. Without an
// override the role's default parameters apply (0.5 / 200 / 50 / 1.0 unless
// configured otherwise); the parameters used are recorded on the response.
ModelResponse respond_medical(Gateway& gateway, const std::string& question, const std::string& model_label,
                              std::optional<GenerationParams> override_params = std::nullopt);

int estimate_tokens(std::string_view text);

}  // namespace medeval::gateway
