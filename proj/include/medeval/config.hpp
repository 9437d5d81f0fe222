#pragma once
// Pipeline configuration: INI sections of key = value pairs.
//
// Every key has a default, unknown sections or keys are rejected, and any key
// can be overridden by MEDEVAL_<SECTION>_<KEY> (upper case, '.' -> '_'), e.g.
// MEDEVAL_BACKEND_JUDGE_ENDPOINT.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "medeval/chain.hpp"
#include "medeval/classifier.hpp"
#include "medeval/gateway.hpp"
#include "medeval/introspection.hpp"
#include "medeval/metrics.hpp"
#include "medeval/review.hpp"

namespace medeval::config {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

class PipelineConfig {
 public:
  using Sections = std::map<std::string, std::map<std::string, std::string>>;

  static PipelineConfig defaults(const EnvLookup& env = process_env);
  static PipelineConfig parse(const std::string& ini_text, const EnvLookup& env = process_env);
  static PipelineConfig load(const std::filesystem::path& path, const EnvLookup& env = process_env);

  const std::string& get(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  std::int64_t get_int(const std::string& section, const std::string& key) const;

  std::uint64_t seed() const;
  // nullopt when the role's section leaves both kind and endpoint empty.
  std::optional<gateway::BackendConfig> backend(gateway::Role role) const;
  // ConfigError naming the missing key when the role is not configured.
  gateway::BackendConfig require_backend(gateway::Role role) const;

  std::size_t chunk_window() const;
  std::size_t chunk_overlap() const;
  std::size_t embedder_dim() const;
  chain::ChainConfig chain() const;
  classifier::TrainOptions classifier() const;
  introspection::IterationOptions introspection() const;
  metrics::ReportOptions metrics() const;
  review::StoreOptions review() const;

  nlohmann::json to_json() const;
  // sha256 of the canonical resolved configuration.
  std::string hash() const;

 private:
  explicit PipelineConfig(Sections values) : values_(std::move(values)) {}
  void apply_env(const EnvLookup& env);

  Sections values_;
};

}  // namespace medeval::config
