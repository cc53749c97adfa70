#include "aclready/response.hpp"

#include "aclready/error.hpp"
#include "aclready/text.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

namespace aclready {

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::llm: return "llm";
    case Origin::human: return "human";
    case Origin::human_edited: return "human_edited";
  }
  return "llm";
}

namespace {

Origin origin_from_string(std::string_view s) {
  if (s == "human") return Origin::human;
  if (s == "human_edited") return Origin::human_edited;
  if (s == "llm") return Origin::llm;
  throw Error(ErrorCode::io_error, "unknown origin '" + std::string(s) + "'");
}

constexpr JobState kStates[] = {JobState::parsing, JobState::chunking, JobState::embedding, JobState::inferencing,
                                JobState::review,  JobState::done,     JobState::failed};

}  // namespace

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::parsing: return "parsing";
    case JobState::chunking: return "chunking";
    case JobState::embedding: return "embedding";
    case JobState::inferencing: return "inferencing";
    case JobState::review: return "review";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "failed";
}

std::optional<JobState> job_state_from_string(std::string_view s) {
  for (auto st : kStates)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool can_transition(JobState from, JobState to) {
  if (from == JobState::failed || from == JobState::done) return false;
  if (to == JobState::failed) return true;
  return static_cast<int>(to) > static_cast<int>(from);
}

void transition(JobRecord& job, JobState to) {
  if (!can_transition(job.state, to)) {
    throw Error(ErrorCode::invalid_transition, "job " + job.job_id + " cannot move from " +
                                                   std::string(to_string(job.state)) + " to " +
                                                   std::string(to_string(to)));
  }
  job.state = to;
}

const ChecklistResponse* JobRecord::find(std::string_view qid) const {
  for (const auto& r : responses)
    if (r.qid == qid) return &r;
  return nullptr;
}

ChecklistResponse* JobRecord::find(std::string_view qid) {
  for (auto& r : responses)
    if (r.qid == qid) return &r;
  return nullptr;
}

std::string format_response(const LlmAnswer& a) {
  std::string body;
  switch (a.verdict) {
    case Verdict::yes:
      body = a.section_name ? *a.section_name : a.raw_section_name;
      break;
    case Verdict::no:
      body = "None. " + a.justification;
      break;
    case Verdict::not_applicable:
      body = "N/A. " + a.justification;
      break;
    case Verdict::unknown:
      if (!a.justification.empty()) {
        body = a.justification;
      } else {
        auto raw = text::collapse_whitespace(a.raw_response);
        body = "Unparsed model reply: " + (raw.size() > 300 ? raw.substr(0, 300) + "..." : raw);
      }
      break;
  }
  body = std::string(text::trim(body));
  if (body.empty()) body = "(empty answer)";
  return a.needs_review ? std::string(kNeedsReviewPrefix) + body : body;
}

std::vector<ChecklistResponse> assemble_responses(const QuestionBank& bank, std::span<const QuestionOutcome> outcomes) {
  std::vector<ChecklistResponse> out;
  for (const auto& q : bank.questions) {
    ChecklistResponse r;
    r.qid = q.qid;
    r.section = q.section;
    r.question = q.text;
    if (q.answer_mode == AnswerMode::human_only) {
      r.origin = Origin::human;
      out.push_back(std::move(r));
      continue;
    }
    auto it = std::find_if(outcomes.begin(), outcomes.end(),
                           [&](const QuestionOutcome& o) { return outcome_qid(o) == q.qid; });
    r.origin = Origin::llm;
    if (it == outcomes.end()) {
      r.needs_review = true;
      r.review_reason = "question was not answered";
      r.error = "question was not answered";
      r.display_text = std::string(kNeedsReviewPrefix) + "No answer was generated.";
      r.provenance = Provenance{};
      out.push_back(std::move(r));
      continue;
    }
    if (const auto* a = std::get_if<LlmAnswer>(&*it)) {
      r.display_text = format_response(*a);
      r.verdict = a->verdict;
      r.needs_review = a->needs_review;
      r.review_reason = a->review_reason;
      r.section_name = a->section_name;
      r.justification = a->justification;
      r.provenance = Provenance{a->prompt, a->model_id, a->elapsed_ms};
    } else {
      const auto& f = std::get<QuestionFailure>(*it);
      r.needs_review = true;
      r.review_reason = std::string(to_string(f.code));
      r.error = f.message;
      r.display_text = std::string(kNeedsReviewPrefix) + "No answer could be generated (" +
                       std::string(to_string(f.code)) + "): " + f.message;
      r.provenance = Provenance{f.prompt, f.model_id, f.elapsed_ms};
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string iso8601_utc(std::chrono::system_clock::time_point t) {
  auto secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void apply_edit(JobRecord& job, std::string_view qid, std::string new_text, std::chrono::system_clock::time_point now) {
  if (job.state != JobState::review) {
    throw Error(ErrorCode::job_not_in_review,
                "job " + job.job_id + " is " + std::string(to_string(job.state)) + ", edits need review");
  }
  auto* r = job.find(qid);
  if (!r) throw Error(ErrorCode::unknown_question, "unknown question " + std::string(qid));
  if (r->display_text == new_text) return;
  r->display_text = std::move(new_text);
  r->origin = r->origin == Origin::human ? Origin::human : Origin::human_edited;
  r->needs_review = false;
  r->edited_at = iso8601_utc(now);
}

namespace {

void quote_lines(std::string& out, std::string_view body) {
  for (const auto& line : text::split(body, '\n')) out += line.empty() ? ">\n" : "> " + line + "\n";
}

std::string format_seconds(double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", s);
  return buf;
}

}  // namespace

std::string export_markdown(const JobRecord& job, const QuestionBank& bank, const ExportOptions& options) {
  for (const auto& q : bank.questions) {
    if (q.answer_mode != AnswerMode::human_only) continue;
    const auto* r = job.find(q.qid);
    if ((!r || text::trim(r->display_text).empty()) && !options.placeholder_for_unanswered) {
      throw Error(ErrorCode::section_e_unanswered, q.qid + " must be answered before export");
    }
  }

  std::string out = "# Responsible NLP Checklist\n\n";
  out += "**Paper:** " + job.filename + "\n";
  if (job.title) out += "**Title:** " + *job.title + "\n";
  for (const auto& sec : bank.sections) {
    out += "\n## " + sec.key + ". " + sec.title + "\n";
    for (const auto& q : bank.questions) {
      if (q.section != sec.key) continue;
      out += "\n### " + q.qid + ". " + q.text + "\n\n";
      const auto* r = job.find(q.qid);
      std::string body = r ? r->display_text : std::string();
      if (text::trim(body).empty()) body = kUnansweredPlaceholder;
      quote_lines(out, body);
      if (r && r->origin == Origin::llm && r->verdict == Verdict::no && !r->justification.empty()) {
        out += "\n*Justification:* " + text::collapse_whitespace(r->justification) + "\n";
      }
    }
  }
  out += "\n---\n\n*Time to generate responses: " + format_seconds(job.pipeline_elapsed_s) + " s*\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_markdown_export(std::string_view markdown) {
  std::vector<std::pair<std::string, std::string>> out;
  auto lines = text::split(markdown, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (!line.starts_with("### ")) continue;
    auto dot = line.find(". ", 4);
    if (dot == std::string::npos) continue;
    std::string qid = line.substr(4, dot - 4);
    std::size_t j = i + 1;
    while (j < lines.size() && lines[j].empty()) ++j;
    std::string body;
    bool first = true;
    for (; j < lines.size() && lines[j].starts_with(">"); ++j) {
      if (!first) body += "\n";
      first = false;
      const auto& l = lines[j];
      body += l.size() > 1 && l[1] == ' ' ? l.substr(2) : l.substr(1);
    }
    out.emplace_back(std::move(qid), std::move(body));
    i = j - 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <class T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

// A1 < A2 < ... < A10 < B1.
bool qid_less(const std::string& a, const std::string& b) {
  auto split_qid = [](const std::string& q) {
    std::size_t i = 0;
    while (i < q.size() && !std::isdigit(static_cast<unsigned char>(q[i]))) ++i;
    long n = i < q.size() ? std::strtol(q.c_str() + i, nullptr, 10) : 0;
    return std::pair(q.substr(0, i), n);
  };
  return split_qid(a) < split_qid(b);
}

}  // namespace

void to_json(nlohmann::json& j, const ChecklistResponse& r) {
  j = nlohmann::json{{"qid", r.qid},
                     {"section", r.section},
                     {"question", r.question},
                     {"text", r.display_text},
                     {"answer", to_string(r.verdict)},
                     {"origin", to_string(r.origin)},
                     {"needs_review", r.needs_review},
                     {"review_reason", r.review_reason},
                     {"section name", opt_json(r.section_name)},
                     {"justification", r.justification},
                     {"prompt", r.provenance ? nlohmann::json(r.provenance->prompt) : nlohmann::json(nullptr)},
                     {"llm", r.provenance ? nlohmann::json(r.provenance->model_id) : nlohmann::json(nullptr)},
                     {"elapsed_ms", r.provenance ? nlohmann::json(r.provenance->elapsed_ms) : nlohmann::json(nullptr)},
                     {"edited_at", opt_json(r.edited_at)},
                     {"error", opt_json(r.error)}};
}

void from_json(const nlohmann::json& j, ChecklistResponse& r) {
  r = ChecklistResponse{};
  r.qid = j.at("qid").get<std::string>();
  r.section = j.value("section", std::string());
  r.question = j.value("question", std::string());
  r.display_text = j.value("text", std::string());
  r.verdict = verdict_from_string(j.value("answer", std::string("unknown")));
  r.origin = origin_from_string(j.value("origin", std::string("llm")));
  r.needs_review = j.value("needs_review", false);
  r.review_reason = j.value("review_reason", std::string());
  r.section_name = opt_string(j, "section name");
  r.justification = j.value("justification", std::string());
  if (j.contains("llm") && !j["llm"].is_null()) {
    r.provenance = Provenance{opt_string(j, "prompt").value_or(""), j["llm"].get<std::string>(),
                              j.value("elapsed_ms", std::int64_t{0})};
  }
  r.edited_at = opt_string(j, "edited_at");
  r.error = opt_string(j, "error");
}

void to_json(nlohmann::json& j, const JobRecord& job) {
  nlohmann::json responses = nlohmann::json::object();
  for (const auto& r : job.responses) responses[r.qid] = r;
  j = nlohmann::json{{"job_id", job.job_id},
                     {"filename", job.filename},
                     {"title", opt_json(job.title)},
                     {"created_at", job.created_at},
                     {"bank_version", job.bank_version},
                     {"state", to_string(job.state)},
                     {"failure_reason", opt_json(job.failure_reason)},
                     {"pipeline_elapsed_s", job.pipeline_elapsed_s},
                     {"provider_elapsed_s", job.provider_elapsed_s},
                     {"responses", responses},
                     {"report", job.report}};
}

void from_json(const nlohmann::json& j, JobRecord& job) {
  job = JobRecord{};
  job.job_id = j.at("job_id").get<std::string>();
  job.filename = j.value("filename", std::string());
  job.title = opt_string(j, "title");
  job.created_at = j.value("created_at", std::string());
  job.bank_version = j.value("bank_version", std::string());
  auto state = job_state_from_string(j.value("state", std::string()));
  if (!state) throw Error(ErrorCode::io_error, "job " + job.job_id + " has an invalid state");
  job.state = *state;
  job.failure_reason = opt_string(j, "failure_reason");
  job.pipeline_elapsed_s = j.value("pipeline_elapsed_s", 0.0);
  job.provider_elapsed_s = j.value("provider_elapsed_s", 0.0);
  if (j.contains("responses")) {
    for (const auto& [qid, r] : j["responses"].items()) job.responses.push_back(r.get<ChecklistResponse>());
  }
  std::sort(job.responses.begin(), job.responses.end(),
            [](const ChecklistResponse& a, const ChecklistResponse& b) { return qid_less(a.qid, b.qid); });
  if (j.contains("report")) {
    const auto& r = j["report"];
    job.report.warnings = r.value("warnings", std::vector<std::string>{});
    job.report.notes = r.value("notes", std::vector<std::string>{});
    job.report.dropped_sections = r.value("dropped_sections", std::vector<std::string>{});
  }
}

// ---------------------------------------------------------------------------
// Storage

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(counter++) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io_error, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::io_error, "cannot replace " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

JobStore::JobStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_ / "jobs", ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create data root " + root_.string() + ": " + ec.message());
}

std::filesystem::path JobStore::job_dir(const std::string& job_id) const {
  if (job_id.empty() || job_id.find_first_of("/\\.") != std::string::npos) {
    throw Error(ErrorCode::unknown_job, "invalid job id '" + job_id + "'");
  }
  return root_ / "jobs" / job_id;
}

void JobStore::save(const JobRecord& job) const {
  write_file_atomic(job_dir(job.job_id) / "job.json", nlohmann::json(job).dump(2) + "\n");
}

std::optional<JobRecord> JobStore::load(const std::string& job_id) const {
  auto path = job_dir(job_id) / "job.json";
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::io_error, "corrupt job record " + path.string());
  return j.get<JobRecord>();
}

std::vector<std::string> JobStore::list() const {
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(root_ / "jobs")) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "job.json")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void JobStore::write_artifact(const std::string& job_id, const std::string& name, std::string_view bytes) const {
  write_file_atomic(job_dir(job_id) / name, bytes);
}

std::vector<std::string> JobStore::sweep(std::chrono::seconds max_age, std::filesystem::file_time_type now) const {
  std::vector<std::string> removed;
  for (const auto& entry : std::filesystem::directory_iterator(root_ / "jobs")) {
    if (!entry.is_directory()) continue;
    std::error_code ec;
    auto stamp = std::filesystem::last_write_time(entry.path() / "job.json", ec);
    if (ec) stamp = std::filesystem::last_write_time(entry.path(), ec);
    if (ec || now - stamp <= max_age) continue;
    std::filesystem::remove_all(entry.path(), ec);
    if (!ec) removed.push_back(entry.path().filename().string());
  }
  std::sort(removed.begin(), removed.end());
  return removed;
}

}  // namespace aclready
