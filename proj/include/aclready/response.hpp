#pragma once

#include "aclready/checklist.hpp"
#include "aclready/orchestrator.hpp"
#include "aclready/tex_ingest.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aclready {

enum class Origin { llm, human, human_edited };

std::string_view to_string(Origin o);

struct Provenance {
  std::string prompt;
  std::string model_id;
  std::int64_t elapsed_ms = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ChecklistResponse {
  std::string qid;
  std::string section;
  std::string question;
  std::string display_text;
  Verdict verdict = Verdict::unknown;
  Origin origin = Origin::llm;
  bool needs_review = false;
  std::string review_reason;
  std::optional<std::string> section_name;
  std::string justification;
  std::optional<Provenance> provenance;
  std::optional<std::string> edited_at;
  // Failure message when the model could not produce an answer.
  std::optional<std::string> error;

  friend bool operator==(const ChecklistResponse&, const ChecklistResponse&) = default;
};

enum class JobState { parsing, chunking, embedding, inferencing, review, done, failed };

std::string_view to_string(JobState s);
std::optional<JobState> job_state_from_string(std::string_view s);

// Forward along the pipeline order (skipping allowed), or to failed from any
// non-terminal state.
bool can_transition(JobState from, JobState to);

struct JobRecord {
  std::string job_id;
  std::string filename;
  std::optional<std::string> title;
  std::string created_at;
  std::string bank_version;
  JobState state = JobState::parsing;
  std::optional<std::string> failure_reason;
  double pipeline_elapsed_s = 0.0;
  double provider_elapsed_s = 0.0;
  std::vector<ChecklistResponse> responses;  // bank order
  ParseReport report;

  const ChecklistResponse* find(std::string_view qid) const;
  ChecklistResponse* find(std::string_view qid);
};

// Throws Error(invalid_transition).
void transition(JobRecord& job, JobState to);

// "3 Method" for yes, "None. <justification>" for no; "[NEEDS REVIEW] "
// prefixed when the answer failed validation.
std::string format_response(const LlmAnswer& a);

inline constexpr std::string_view kNeedsReviewPrefix = "[NEEDS REVIEW] ";

// One response per bank question; llm questions from their outcomes (matched
// by qid), human-only questions as empty human placeholders.
std::vector<ChecklistResponse> assemble_responses(const QuestionBank& bank, std::span<const QuestionOutcome> outcomes);

std::string iso8601_utc(std::chrono::system_clock::time_point t);

// Throws Error(job_not_in_review) or Error(unknown_question).
void apply_edit(JobRecord& job, std::string_view qid, std::string new_text,
                std::chrono::system_clock::time_point now = std::chrono::system_clock::now());

struct ExportOptions {
  // Write a TODO line instead of failing when a human-only answer is blank.
  bool placeholder_for_unanswered = false;
};

inline constexpr std::string_view kUnansweredPlaceholder = "TODO: answer this question yourself.";

// Throws Error(section_e_unanswered) unless every human-only question has
// text (or the placeholder option is set).
std::string export_markdown(const JobRecord& job, const QuestionBank& bank, const ExportOptions& options = {});

// (qid, display_text) pairs recovered from export_markdown output.
std::vector<std::pair<std::string, std::string>> parse_markdown_export(std::string_view markdown);

void to_json(nlohmann::json& j, const ChecklistResponse& r);
void from_json(const nlohmann::json& j, ChecklistResponse& r);
void to_json(nlohmann::json& j, const JobRecord& job);
void from_json(const nlohmann::json& j, JobRecord& job);

// Per-job directories under a data root: <root>/jobs/<id>/job.json plus the
// uploaded source and pipeline artifacts. Writes are atomic (tmp + rename).
class JobStore {
 public:
  explicit JobStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path job_dir(const std::string& job_id) const;

  void save(const JobRecord& job) const;
  std::optional<JobRecord> load(const std::string& job_id) const;
  std::vector<std::string> list() const;
  void write_artifact(const std::string& job_id, const std::string& name, std::string_view bytes) const;

  // Removes job directories whose job.json is older than max_age. Returns
  // the removed ids.
  std::vector<std::string> sweep(std::chrono::seconds max_age,
                                 std::filesystem::file_time_type now = std::filesystem::file_time_type::clock::now()) const;

 private:
  std::filesystem::path root_;
};

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace aclready
