#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace aclready {

enum class ErrorCode {
  no_abstract_found,
  empty_document,
  embedder_unavailable,
  unknown_section,
  dimension_mismatch,
  zero_vector,
  empty_index,
  bank_schema_error,
  human_only_question,
  provider_error,
  context_overflow,
  unparseable_response,
  unknown_question,
  job_not_in_review,
  section_e_unanswered,
  invalid_transition,
  unknown_job,
  config_error,
  io_error,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code so the
// service and CLI layers can map it to HTTP statuses and exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ProviderError : public Error {
 public:
  ProviderError(int status, std::string body, bool transient)
      : Error(ErrorCode::provider_error,
              "provider error (status " + std::to_string(status) + "): " + body),
        status_(status),
        body_(std::move(body)),
        transient_(transient) {}

  // 0 when the request never produced an HTTP response.
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }
  bool transient() const noexcept { return transient_; }

 private:
  int status_;
  std::string body_;
  bool transient_;
};

}  // namespace aclready
