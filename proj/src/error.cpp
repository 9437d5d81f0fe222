#include "medeval/error.hpp"

namespace medeval {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyResponses: return "EmptyResponses";
    case Errc::DuplicateModelLabel: return "DuplicateModelLabel";
    case Errc::BlankField: return "BlankField";
    case Errc::InvalidValue: return "InvalidValue";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::NoValidRecords: return "NoValidRecords";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::InvalidWindow: return "InvalidWindow";
    case Errc::EmbedderFailure: return "EmbedderFailure";
    case Errc::EmptyIndex: return "EmptyIndex";
    case Errc::CorruptIndex: return "CorruptIndex";
    case Errc::Timeout: return "Timeout";
    case Errc::BackendError: return "BackendError";
    case Errc::RetriesExhausted: return "RetriesExhausted";
    case Errc::ScriptExhausted: return "ScriptExhausted";
    case Errc::NoBackend: return "NoBackend";
    case Errc::Unresolved: return "Unresolved";
    case Errc::ParseError: return "ParseError";
    case Errc::MissingSlot: return "MissingSlot";
    case Errc::SingleClassInput: return "SingleClassInput";
    case Errc::EmptyGrid: return "EmptyGrid";
    case Errc::EmbedderMismatch: return "EmbedderMismatch";
    case Errc::UnclassifiedPresent: return "UnclassifiedPresent";
    case Errc::SampleTooLarge: return "SampleTooLarge";
    case Errc::UnresolvedId: return "UnresolvedId";
    case Errc::UnapprovedRecord: return "UnapprovedRecord";
    case Errc::DanglingSuggestion: return "DanglingSuggestion";
    case Errc::OpenJuryTickets: return "OpenJuryTickets";
    case Errc::NoPairs: return "NoPairs";
    case Errc::NoTripleCases: return "NoTripleCases";
    case Errc::ConstantInput: return "ConstantInput";
    case Errc::IncompleteMatrix: return "IncompleteMatrix";
    case Errc::DegenerateVariance: return "DegenerateVariance";
    case Errc::AllMissing: return "AllMissing";
    case Errc::NoVariance: return "NoVariance";
    case Errc::ModelAbsent: return "ModelAbsent";
    case Errc::EmptyData: return "EmptyData";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::InvalidPayload: return "InvalidPayload";
    case Errc::NotFound: return "NotFound";
    case Errc::NotClaimed: return "NotClaimed";
    case Errc::AlreadyDone: return "AlreadyDone";
    case Errc::TicketNotFound: return "TicketNotFound";
    case Errc::TranscriptIncomplete: return "TranscriptIncomplete";
    case Errc::NoDecisions: return "NoDecisions";
    case Errc::ExperimentOpen: return "ExperimentOpen";
    case Errc::ExperimentClosed: return "ExperimentClosed";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::LeaseHeld: return "LeaseHeld";
    case Errc::UnknownCommand: return "UnknownCommand";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

nlohmann::json Error::to_json() const {
  nlohmann::json j;
  j["error"] = std::string(to_string(code_));
  j["message"] = what();
  if (!detail_.is_null()) j["detail"] = detail_;
  return j;
}

}  // namespace medeval
