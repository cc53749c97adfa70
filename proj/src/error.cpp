#include "aclready/error.hpp"

namespace aclready {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::no_abstract_found: return "NoAbstractFound";
    case ErrorCode::empty_document: return "EmptyDocument";
    case ErrorCode::embedder_unavailable: return "EmbedderUnavailable";
    case ErrorCode::unknown_section: return "UnknownSection";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::zero_vector: return "ZeroVector";
    case ErrorCode::empty_index: return "EmptyIndex";
    case ErrorCode::bank_schema_error: return "BankSchemaError";
    case ErrorCode::human_only_question: return "HumanOnlyQuestion";
    case ErrorCode::provider_error: return "ProviderError";
    case ErrorCode::context_overflow: return "ContextOverflow";
    case ErrorCode::unparseable_response: return "UnparseableResponse";
    case ErrorCode::unknown_question: return "UnknownQuestion";
    case ErrorCode::job_not_in_review: return "JobNotInReview";
    case ErrorCode::section_e_unanswered: return "SectionEUnanswered";
    case ErrorCode::invalid_transition: return "InvalidTransition";
    case ErrorCode::unknown_job: return "UnknownJob";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

}  // namespace aclready
