#include "medeval/config.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace medeval::config {

using nlohmann::json;

namespace {

PipelineConfig::Sections schema() {
  PipelineConfig::Sections s;
  s["pipeline"] = {{"seed", "7"}};
  for (const char* role : {"evaluator", "suggester", "judge", "responder"}) {
    s[std::string("backend.") + role] = {{"kind", ""},
                                         {"endpoint", ""},
                                         {"model", ""},
                                         {"token_env", ""},
                                         {"timeout_seconds", "60"},
                                         {"max_retries", "3"},
                                         {"max_in_flight", "4"},
                                         {"script_path", ""},
                                         {"temperature", "0.5"},
                                         {"max_new_tokens", "200"},
                                         {"top_k", "50"},
                                         {"top_p", "1.0"}};
  }
  s["knowledge"] = {{"window", "512"}, {"overlap", "64"}, {"top_k", "3"}, {"embedder_dim", "256"}};
  s["chain"] = {{"max_rounds", "5"}, {"marker", "strict"}, {"template_path", ""}, {"token_budget", "2048"},
                {"temperature", "0.0"}, {"max_new_tokens", "1024"}};
  s["classifier"] = {{"c_grid", "0.01,0.1,1,10,100"},
                     {"epochs", "200"},
                     {"learning_rate", "0.1"},
                     {"validation_fraction", "0.2"},
                     {"low_separability_threshold", "0.9"}};
  s["curriculum"] = {{"n1", "1911"}, {"n3", "2394"}};
  s["introspection"] = {{"mode", "rank"}, {"workers", "4"}, {"top_k", "3"}};
  s["metrics"] = {{"tie_mode", "sign"}, {"correlation", "pooled"}, {"icc", "average"}};
  s["review"] = {{"lease_minutes", "30"}, {"reviews_required", "1"}};
  return s;
}

std::string env_name(const std::string& section, const std::string& key) {
  std::string name = "MEDEVAL_";
  for (char ch : section + "_" + key) {
    name.push_back(ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  }
  return name;
}

const char* role_section(gateway::Role role) {
  switch (role) {
    case gateway::Role::Evaluator: return "backend.evaluator";
    case gateway::Role::Suggester: return "backend.suggester";
    case gateway::Role::Judge: return "backend.judge";
    case gateway::Role::Responder: return "backend.responder";
  }
  return "";
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

PipelineConfig PipelineConfig::defaults(const EnvLookup& env) {
  PipelineConfig c(schema());
  c.apply_env(env);
  return c;
}

PipelineConfig PipelineConfig::parse(const std::string& ini_text, const EnvLookup& env) {
  boost::property_tree::ptree tree;
  std::istringstream in(ini_text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(Errc::ConfigError, std::string("config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  auto values = schema();
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) {
      throw Error(Errc::ConfigError, "config key '" + section + "' is outside any section", {{"key", section}});
    }
    auto sec = values.find(section);
    if (sec == values.end()) {
      throw Error(Errc::ConfigError, "unknown config section [" + section + "]", {{"key", section}});
    }
    for (const auto& [key, node] : body) {
      auto k = sec->second.find(key);
      if (k == sec->second.end()) {
        throw Error(Errc::ConfigError, "unknown config key " + section + "." + key, {{"key", section + "." + key}});
      }
      k->second = trim(node.data());
    }
  }
  PipelineConfig c(std::move(values));
  c.apply_env(env);
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path, const EnvLookup& env) {
  if (!std::filesystem::exists(path)) throw Error(Errc::ConfigError, "config file not found: " + path.string());
  return parse(read_file(path), env);
}

void PipelineConfig::apply_env(const EnvLookup& env) {
  if (!env) return;
  for (auto& [section, keys] : values_) {
    for (auto& [key, value] : keys) {
      // Backends also take MEDEVAL_<ROLE>_<KEY>; the full section form wins.
      if (section.starts_with("backend.")) {
        if (auto v = env(env_name(section.substr(8), key))) value = trim(*v);
      }
      if (auto v = env(env_name(section, key))) value = trim(*v);
    }
  }
}

const std::string& PipelineConfig::get(const std::string& section, const std::string& key) const {
  auto s = values_.find(section);
  if (s == values_.end()) throw Error(Errc::ConfigError, "missing config section [" + section + "]", {{"key", section}});
  auto k = s->second.find(key);
  if (k == s->second.end()) {
    throw Error(Errc::ConfigError, "missing config key " + section + "." + key, {{"key", section + "." + key}});
  }
  return k->second;
}

double PipelineConfig::get_double(const std::string& section, const std::string& key) const {
  const auto& v = get(section, key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') {
    throw Error(Errc::ConfigError, section + "." + key + " must be a number, got '" + v + "'", {{"key", section + "." + key}});
  }
  return d;
}

std::int64_t PipelineConfig::get_int(const std::string& section, const std::string& key) const {
  const auto& v = get(section, key);
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') {
    throw Error(Errc::ConfigError, section + "." + key + " must be an integer, got '" + v + "'", {{"key", section + "." + key}});
  }
  return i;
}

std::uint64_t PipelineConfig::seed() const { return static_cast<std::uint64_t>(get_int("pipeline", "seed")); }

std::optional<gateway::BackendConfig> PipelineConfig::backend(gateway::Role role) const {
  const std::string s = role_section(role);
  const auto& kind = get(s, "kind");
  const auto& endpoint = get(s, "endpoint");
  const auto& script = get(s, "script_path");
  if (kind.empty() && endpoint.empty() && script.empty()) return std::nullopt;
  gateway::BackendConfig b;
  b.kind = !kind.empty() ? kind : (!script.empty() ? "script" : "http");
  b.endpoint = endpoint;
  b.model = get(s, "model");
  b.token_env = get(s, "token_env");
  if (b.token_env.empty()) b.token_env = env_name(s.substr(8), "token");
  b.timeout_seconds = get_double(s, "timeout_seconds");
  b.max_retries = static_cast<int>(get_int(s, "max_retries"));
  b.max_in_flight = static_cast<int>(get_int(s, "max_in_flight"));
  b.script_path = script;
  b.default_params = GenerationParams{get_double(s, "temperature"), static_cast<int>(get_int(s, "max_new_tokens")),
                                      static_cast<int>(get_int(s, "top_k")), get_double(s, "top_p")};
  if (b.kind == "http" && b.endpoint.empty()) {
    throw Error(Errc::ConfigError, "missing config key " + s + ".endpoint", {{"key", s + ".endpoint"}});
  }
  if (b.kind == "script" && b.script_path.empty()) {
    throw Error(Errc::ConfigError, "missing config key " + s + ".script_path", {{"key", s + ".script_path"}});
  }
  try {
    b.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, s + ": " + e.what(), {{"key", s}});
  }
  return b;
}

gateway::BackendConfig PipelineConfig::require_backend(gateway::Role role) const {
  auto b = backend(role);
  if (!b) {
    const std::string s = role_section(role);
    throw Error(Errc::ConfigError, "missing config key " + s + ".endpoint (no " + std::string(gateway::to_string(role)) +
                                       " backend configured)",
                {{"key", s + ".endpoint"}});
  }
  return *b;
}

std::size_t PipelineConfig::chunk_window() const { return static_cast<std::size_t>(get_int("knowledge", "window")); }
std::size_t PipelineConfig::chunk_overlap() const { return static_cast<std::size_t>(get_int("knowledge", "overlap")); }
std::size_t PipelineConfig::embedder_dim() const { return static_cast<std::size_t>(get_int("knowledge", "embedder_dim")); }

chain::ChainConfig PipelineConfig::chain() const {
  chain::ChainConfig c;
  c.max_rounds = static_cast<int>(get_int("chain", "max_rounds"));
  c.top_k = static_cast<std::size_t>(get_int("knowledge", "top_k"));
  c.marker = chain::marker_from_string(get("chain", "marker"));
  if (const auto& t = get("chain", "template_path"); !t.empty()) c.prompt_template = read_file(t);
  c.token_budget = static_cast<std::size_t>(get_int("chain", "token_budget"));
  c.params.temperature = get_double("chain", "temperature");
  c.params.max_new_tokens = static_cast<int>(get_int("chain", "max_new_tokens"));
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, std::string("[chain]: ") + e.what(), {{"key", "chain"}});
  }
  return c;
}

classifier::TrainOptions PipelineConfig::classifier() const {
  classifier::TrainOptions o;
  o.c_grid.clear();
  std::string grid = get("classifier", "c_grid");
  for (auto& ch : grid) {
    if (ch == ',') ch = ' ';
  }
  for (const auto& w : split_words(grid)) {
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (*end != '\0' || !(v > 0)) {
      throw Error(Errc::ConfigError, "classifier.c_grid has a bad value '" + w + "'", {{"key", "classifier.c_grid"}});
    }
    o.c_grid.push_back(v);
  }
  o.seed = seed();
  o.epochs = static_cast<int>(get_int("classifier", "epochs"));
  o.learning_rate = get_double("classifier", "learning_rate");
  o.validation_fraction = get_double("classifier", "validation_fraction");
  o.low_separability_threshold = get_double("classifier", "low_separability_threshold");
  return o;
}

introspection::IterationOptions PipelineConfig::introspection() const {
  introspection::IterationOptions o;
  o.mode = introspection::correctness_from_string(get("introspection", "mode"));
  o.chain = chain();
  o.workers = static_cast<std::size_t>(std::max<std::int64_t>(1, get_int("introspection", "workers")));
  o.consensus.top_k = static_cast<std::size_t>(get_int("introspection", "top_k"));
  if (auto s = backend(gateway::Role::Suggester)) o.consensus.suggester_params = s->default_params;
  if (auto j = backend(gateway::Role::Judge)) o.consensus.judge_params = j->default_params;
  return o;
}

metrics::ReportOptions PipelineConfig::metrics() const {
  metrics::ReportOptions o;
  const auto& tie = get("metrics", "tie_mode");
  if (tie == "sign") {
    o.tie_mode = metrics::TieMode::SignMatch;
  } else if (tie == "strict") {
    o.tie_mode = metrics::TieMode::StrictOnly;
  } else {
    throw Error(Errc::ConfigError, "metrics.tie_mode must be sign or strict", {{"key", "metrics.tie_mode"}});
  }
  const auto& corr = get("metrics", "correlation");
  if (corr == "pooled") {
    o.correlation = metrics::CorrelationMode::Pooled;
  } else if (corr == "per_case") {
    o.correlation = metrics::CorrelationMode::PerCase;
  } else {
    throw Error(Errc::ConfigError, "metrics.correlation must be pooled or per_case", {{"key", "metrics.correlation"}});
  }
  const auto& icc = get("metrics", "icc");
  if (icc == "average") {
    o.icc_variant = metrics::IccVariant::Average;
  } else if (icc == "single") {
    o.icc_variant = metrics::IccVariant::Single;
  } else {
    throw Error(Errc::ConfigError, "metrics.icc must be average or single", {{"key", "metrics.icc"}});
  }
  return o;
}

review::StoreOptions PipelineConfig::review() const {
  review::StoreOptions o;
  o.lease_ms = get_int("review", "lease_minutes") * 60 * 1000;
  o.reviews_required = static_cast<int>(get_int("review", "reviews_required"));
  return o;
}

json PipelineConfig::to_json() const {
  json j = json::object();
  for (const auto& [section, keys] : values_) {
    for (const auto& [key, value] : keys) {
      j[section][key] = value;
    }
  }
  return j;
}

std::string PipelineConfig::hash() const { return sha256_hex(to_json().dump()); }

}  // namespace medeval::config
