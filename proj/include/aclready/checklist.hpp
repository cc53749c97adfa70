#pragma once

#include "aclready/tex_ingest.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace aclready {

enum class AnswerMode { llm, human_only };

// Roles a question may restrict retrieval to; resolved against the parsed
// section titles at answer time.
enum class SectionRole { abstract, introduction, conclusion, limitations, ethics, appendix };

std::string_view to_string(SectionRole role);
std::optional<SectionRole> section_role_from_string(std::string_view s);

struct ChecklistQuestion {
  std::string qid;
  std::string section;  // "A".."E"
  std::string text;
  std::string guidance;
  std::vector<SectionRole> section_filter;
  AnswerMode answer_mode = AnswerMode::llm;
};

struct ChecklistSection {
  std::string key;
  std::string title;
  std::size_t question_count = 0;
};

struct QuestionBank {
  std::string version;
  std::string introduction;
  std::string output_structure;
  std::size_t llm_question_count = 0;
  std::vector<ChecklistSection> sections;
  std::vector<ChecklistQuestion> questions;

  const ChecklistQuestion* find(std::string_view qid) const;
  const ChecklistSection* find_section(std::string_view key) const;
  std::vector<const ChecklistQuestion*> llm_questions() const;
};

// Path of the bank shipped with the build.
std::filesystem::path default_question_bank_path();

// Validates and returns the bank. Throws Error(bank_schema_error) naming the
// offending qid (or field) on any violation.
QuestionBank load_question_bank(const std::filesystem::path& path);
QuestionBank parse_question_bank(const nlohmann::json& j);

struct RenderedPrompt {
  std::string qid;
  std::string text;
  std::vector<std::string> valid_sections;
  // Everything before and after the paper-context block, so the same
  // question can be re-rendered over different context batches.
  std::string head;
  std::string tail;

  std::string compose(std::span<const std::string> contexts) const;
};

inline constexpr std::string_view kContextSeparator = "\n\n---\n\n";

// Four blocks in order (Introduction, Question, Additional Context, Output
// Structure) with the paper context between the last two and the paper's
// section names listed as the valid answer choices. Throws
// Error(human_only_question) for questions reserved to the author.
RenderedPrompt render_prompt(const QuestionBank& bank, const ChecklistQuestion& q, const ParsedPaper& paper,
                             std::span<const std::string> context_texts = {});

// Display names of the sections matching the given roles, document order.
std::vector<std::string> resolve_section_roles(std::span<const SectionRole> roles, const ParsedPaper& paper);

}  // namespace aclready
