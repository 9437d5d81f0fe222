#pragma once
// Error codes shared by every pipeline stage.
//
// All fallible operations throw medeval::Error. The code is stable and is what
// the CLI reports in its machine-readable stderr JSON.

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace medeval {

enum class Errc {
  // core-model
  EmptyResponses,
  DuplicateModelLabel,
  BlankField,
  InvalidValue,
  // corpus-ingest
  FileNotFound,
  NoValidRecords,
  LengthMismatch,
  // knowledge-store
  InvalidWindow,
  EmbedderFailure,
  EmptyIndex,
  CorruptIndex,
  // llm-gateway
  Timeout,
  BackendError,
  RetriesExhausted,
  ScriptExhausted,
  NoBackend,
  // eval-chain
  Unresolved,
  ParseError,
  MissingSlot,
  // quality-classifier
  SingleClassInput,
  EmptyGrid,
  EmbedderMismatch,
  UnclassifiedPresent,
  // curriculum-planner
  SampleTooLarge,
  UnresolvedId,
  UnapprovedRecord,
  // introspection-loop
  DanglingSuggestion,
  OpenJuryTickets,
  // metrics
  NoPairs,
  NoTripleCases,
  ConstantInput,
  IncompleteMatrix,
  DegenerateVariance,
  AllMissing,
  NoVariance,
  ModelAbsent,
  // iteration-model
  EmptyData,
  TooFewPoints,
  // review-service
  InvalidPayload,
  NotFound,
  NotClaimed,
  AlreadyDone,
  TicketNotFound,
  TranscriptIncomplete,
  NoDecisions,
  ExperimentOpen,
  ExperimentClosed,
  Unauthorized,
  LeaseHeld,
  // cli
  UnknownCommand,
  ConfigError,
  IoError,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, nlohmann::json detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const nlohmann::json& detail() const noexcept { return detail_; }

  // {"error": "<code>", "message": "...", "detail": {...}}
  nlohmann::json to_json() const;

 private:
  Errc code_;
  nlohmann::json detail_;
};

}  // namespace medeval
