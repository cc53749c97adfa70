#include "aclready/checklist.hpp"

#include "aclready/error.hpp"
#include "aclready/text.hpp"

#include <algorithm>
#include <fstream>

#ifndef ACLREADY_DEFAULT_BANK
#define ACLREADY_DEFAULT_BANK "data/questions.json"
#endif

namespace aclready {

std::string_view to_string(SectionRole role) {
  switch (role) {
    case SectionRole::abstract: return "abstract";
    case SectionRole::introduction: return "introduction";
    case SectionRole::conclusion: return "conclusion";
    case SectionRole::limitations: return "limitations";
    case SectionRole::ethics: return "ethics";
    case SectionRole::appendix: return "appendix";
  }
  return "unknown";
}

std::optional<SectionRole> section_role_from_string(std::string_view s) {
  for (auto r : {SectionRole::abstract, SectionRole::introduction, SectionRole::conclusion, SectionRole::limitations,
                 SectionRole::ethics, SectionRole::appendix}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

const ChecklistQuestion* QuestionBank::find(std::string_view qid) const {
  for (const auto& q : questions)
    if (q.qid == qid) return &q;
  return nullptr;
}

const ChecklistSection* QuestionBank::find_section(std::string_view key) const {
  for (const auto& s : sections)
    if (s.key == key) return &s;
  return nullptr;
}

std::vector<const ChecklistQuestion*> QuestionBank::llm_questions() const {
  std::vector<const ChecklistQuestion*> out;
  for (const auto& q : questions)
    if (q.answer_mode == AnswerMode::llm) out.push_back(&q);
  return out;
}

std::filesystem::path default_question_bank_path() { return ACLREADY_DEFAULT_BANK; }

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::bank_schema_error, "question bank: " + where + ": " + what);
}

std::string required_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
    schema_error(where, std::string("missing or empty string field '") + key + "'");
  }
  return j[key].get<std::string>();
}

bool is_count(const nlohmann::json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; }

}  // namespace

QuestionBank parse_question_bank(const nlohmann::json& j) {
  if (!j.is_object()) schema_error("root", "not an object");
  QuestionBank bank;
  bank.version = required_string(j, "version", "root");
  bank.introduction = required_string(j, "introduction", "root");
  bank.output_structure = required_string(j, "output_structure", "root");
  if (!j.contains("llm_question_count") || !is_count(j["llm_question_count"])) {
    schema_error("root", "missing 'llm_question_count'");
  }
  bank.llm_question_count = j["llm_question_count"].get<std::size_t>();

  if (!j.contains("sections") || !j["sections"].is_array() || j["sections"].empty()) {
    schema_error("root", "missing 'sections'");
  }
  for (const auto& s : j["sections"]) {
    ChecklistSection sec;
    sec.key = required_string(s, "key", "section");
    sec.title = required_string(s, "title", "section " + sec.key);
    if (!s.contains("question_count") || !is_count(s["question_count"])) {
      schema_error("section " + sec.key, "missing 'question_count'");
    }
    sec.question_count = s["question_count"].get<std::size_t>();
    if (bank.find_section(sec.key)) schema_error("section " + sec.key, "duplicate section key");
    bank.sections.push_back(std::move(sec));
  }

  if (!j.contains("questions") || !j["questions"].is_array()) schema_error("root", "missing 'questions'");
  std::set<std::string> seen;
  for (const auto& item : j["questions"]) {
    ChecklistQuestion q;
    q.qid = required_string(item, "qid", "question");
    if (!seen.insert(q.qid).second) schema_error(q.qid, "duplicate qid");
    q.section = required_string(item, "section", q.qid);
    if (!bank.find_section(q.section)) schema_error(q.qid, "unknown section '" + q.section + "'");
    q.text = required_string(item, "text", q.qid);
    q.guidance = item.value("guidance", std::string());
    auto mode = item.value("answer_mode", std::string("llm"));
    if (mode == "llm") {
      q.answer_mode = AnswerMode::llm;
      if (q.guidance.empty()) schema_error(q.qid, "llm questions need 'guidance'");
    } else if (mode == "human_only") {
      q.answer_mode = AnswerMode::human_only;
    } else {
      schema_error(q.qid, "unknown answer_mode '" + mode + "'");
    }
    if (item.contains("section_filter")) {
      if (!item["section_filter"].is_array()) schema_error(q.qid, "'section_filter' must be an array");
      for (const auto& r : item["section_filter"]) {
        auto role = r.is_string() ? section_role_from_string(r.get<std::string>()) : std::nullopt;
        if (!role) schema_error(q.qid, "unknown section role " + r.dump());
        q.section_filter.push_back(*role);
      }
    }
    bank.questions.push_back(std::move(q));
  }

  // Every section must hold exactly question_count questions numbered 1..n.
  for (const auto& sec : bank.sections) {
    for (std::size_t n = 1; n <= sec.question_count; ++n) {
      auto qid = sec.key + std::to_string(n);
      const auto* q = bank.find(qid);
      if (!q) schema_error(qid, "missing question");
      if (q->section != sec.key) schema_error(qid, "listed under section " + q->section);
    }
    auto count = std::count_if(bank.questions.begin(), bank.questions.end(),
                               [&](const ChecklistQuestion& q) { return q.section == sec.key; });
    if (static_cast<std::size_t>(count) != sec.question_count) {
      schema_error("section " + sec.key, "expected " + std::to_string(sec.question_count) + " questions, found " +
                                             std::to_string(count));
    }
  }
  auto llm = bank.llm_questions().size();
  if (llm != bank.llm_question_count) {
    schema_error("root", "expected " + std::to_string(bank.llm_question_count) + " llm-mode questions, found " +
                             std::to_string(llm));
  }
  return bank;
}

QuestionBank load_question_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read question bank " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) schema_error(path.string(), "not valid JSON");
  return parse_question_bank(j);
}

std::string RenderedPrompt::compose(std::span<const std::string> contexts) const {
  std::string out = head;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (i) out += kContextSeparator;
    out += contexts[i];
  }
  if (contexts.empty()) out += "(no context retrieved)";
  out += tail;
  return out;
}

RenderedPrompt render_prompt(const QuestionBank& bank, const ChecklistQuestion& q, const ParsedPaper& paper,
                             std::span<const std::string> context_texts) {
  if (q.answer_mode == AnswerMode::human_only) {
    throw Error(ErrorCode::human_only_question, q.qid + " must be answered by the authors themselves");
  }
  RenderedPrompt p;
  p.qid = q.qid;
  p.valid_sections = paper.display_names();

  p.head = "### Introduction\n" + bank.introduction + "\n\n";
  p.head += "### Question\n" + q.qid + ". " + q.text + "\n\n";
  p.head += "### Additional Context\n" + q.guidance + "\n\n";
  p.head += "### Paper Context\n";

  p.tail = "\n\n### Output Structure\n" + bank.output_structure + "\n";
  p.tail += "Valid section names:\n";
  for (const auto& name : p.valid_sections) p.tail += "- " + name + "\n";

  p.text = p.compose(context_texts);
  return p;
}

std::vector<std::string> resolve_section_roles(std::span<const SectionRole> roles, const ParsedPaper& paper) {
  std::vector<std::string> out;
  for (const auto& s : paper.sections) {
    auto title = text::normalize_title(s.raw_title);
    bool match = std::any_of(roles.begin(), roles.end(), [&](SectionRole r) {
      switch (r) {
        case SectionRole::abstract: return s.kind == SectionKind::abstract;
        case SectionRole::introduction: return title.find("introduction") != std::string::npos;
        case SectionRole::conclusion: return title.find("conclusion") != std::string::npos;
        case SectionRole::limitations: return title.find("limitation") != std::string::npos;
        case SectionRole::ethics: return title.find("ethic") != std::string::npos;
        case SectionRole::appendix: return s.kind == SectionKind::appendix;
      }
      return false;
    });
    if (match) out.push_back(s.display_name);
  }
  return out;
}

}  // namespace aclready
