#include "aclready/orchestrator.hpp"

#include "aclready/error.hpp"
#include "aclready/text.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <future>
#include <set>

namespace aclready {

// ---------------------------------------------------------------------------
// Providers

OpenAiChatProvider::OpenAiChatProvider(ModelConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (config_.model_id.empty()) throw Error(ErrorCode::config_error, "model id must not be empty");
  if (!transport_) transport_ = std::make_shared<HttplibTransport>();
}

nlohmann::json OpenAiChatProvider::request_body(const ChatRequest& request) {
  return nlohmann::json{{"model", request.model},
                        {"temperature", request.temperature},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})}};
}

std::string OpenAiChatProvider::complete(const ChatRequest& request) {
  auto response = post_json(*transport_, join_url(config_.provider_base_url, "/chat/completions"),
                            request_body(request), api_key_from_env(config_.api_key_env));
  const auto& choices = response.value("choices", nlohmann::json::array());
  if (!choices.is_array() || choices.empty() || !choices[0].contains("message") ||
      !choices[0]["message"].contains("content") || !choices[0]["message"]["content"].is_string()) {
    throw ProviderError(200, "chat response has no message content: " + response.dump(), false);
  }
  return choices[0]["message"]["content"].get<std::string>();
}

namespace {

constexpr std::string_view kContextHeader = "### Paper Context\n";
constexpr std::string_view kOutputHeader = "\n\n### Output Structure\n";
constexpr std::string_view kValidHeader = "Valid section names:\n";
constexpr std::string_view kSectionLabel = "Section: ";
constexpr std::string_view kQuestionHeader = "### Question\n";
constexpr std::size_t kStubKeywordLength = 7;

std::vector<std::string> listed_sections(std::string_view prompt) {
  std::vector<std::string> out;
  auto pos = prompt.rfind(kValidHeader);
  if (pos == std::string_view::npos) return out;
  for (const auto& line : text::split(prompt.substr(pos + kValidHeader.size()), '\n')) {
    if (line.starts_with("- ")) out.push_back(line.substr(2));
  }
  return out;
}

}  // namespace

namespace {

std::set<std::string> words_of(std::string_view s, std::size_t min_len) {
  std::set<std::string> out;
  std::string cur;
  auto push = [&] {
    if (cur.size() >= min_len) out.insert(cur);
    cur.clear();
  };
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      push();
    }
  }
  push();
  return out;
}

}  // namespace

std::string StubChatProvider::complete(const ChatRequest& request) {
  std::string_view prompt = request.prompt;
  auto valid = listed_sections(prompt);
  auto begin = prompt.find(kContextHeader);
  auto end = prompt.rfind(kOutputHeader);
  std::string_view context;
  if (begin != std::string_view::npos && end != std::string_view::npos && end > begin) {
    context = prompt.substr(begin + kContextHeader.size(), end - begin - kContextHeader.size());
  }
  std::string_view question;
  if (auto q = prompt.find(kQuestionHeader); q != std::string_view::npos) {
    question = prompt.substr(q + kQuestionHeader.size());
    question = question.substr(0, question.find("\n\n"));
  }
  const auto keywords = words_of(question, kStubKeywordLength);

  std::optional<std::string> cited;
  std::size_t pos = 0;
  while (!cited && pos <= context.size()) {
    auto sep = context.find(kContextSeparator, pos);
    auto block = context.substr(pos, sep == std::string_view::npos ? std::string_view::npos : sep - pos);
    pos = sep == std::string_view::npos ? context.size() + 1 : sep + kContextSeparator.size();
    if (block.starts_with(kSectionLabel)) {
      auto nl = block.find('\n');
      std::string name(block.substr(kSectionLabel.size(), nl == std::string_view::npos ? std::string_view::npos
                                                                                         : nl - kSectionLabel.size()));
      if (std::find(valid.begin(), valid.end(), name) == valid.end()) continue;
      auto body = nl == std::string_view::npos ? std::string_view() : block.substr(nl + 1);
      auto words = words_of(body, kStubKeywordLength);
      if (std::any_of(keywords.begin(), keywords.end(), [&](const std::string& w) { return words.count(w) > 0; })) {
        cited = name;
      }
    } else {
      // A lower-level answer being combined.
      auto j = nlohmann::json::parse(block, nullptr, false);
      if (j.is_object() && j.value("answer", "") == "yes") {
        auto name = j.value("section name", "");
        if (std::find(valid.begin(), valid.end(), name) != valid.end()) cited = name;
      }
    }
  }

  nlohmann::json reply;
  if (cited) {
    reply = {{"answer", "yes"},
             {"section name", *cited},
             {"justification", "The retrieved passages from " + *cited + " address this question."}};
  } else {
    reply = {{"answer", "no"},
             {"section name", "None"},
             {"justification", "The retrieved passages do not address this question."}};
  }
  return reply.dump();
}

std::string RecordingChatProvider::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
  }
  BusyClock::Scope busy(*clock_);
  return inner_->complete(request);
}

std::vector<ChatRequest> RecordingChatProvider::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t RecordingChatProvider::call_count() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

// ---------------------------------------------------------------------------
// Calls and tree summarization

std::string chat_complete(ChatProvider& provider, const ModelConfig& config, const std::string& prompt) {
  if (prompt.size() > config.max_context_chars) {
    throw Error(ErrorCode::context_overflow, "prompt of " + std::to_string(prompt.size()) +
                                                 " chars exceeds the context window of " +
                                                 std::to_string(config.max_context_chars));
  }
  ChatRequest request{config.model_id, config.temperature, prompt};
  return with_retries(config.retry, [&] { return provider.complete(request); });
}

namespace {

std::size_t context_budget(const RenderedPrompt& prompt, std::size_t max_context_chars) {
  auto overhead = prompt.head.size() + prompt.tail.size();
  if (overhead >= max_context_chars) {
    throw Error(ErrorCode::context_overflow, "prompt without context already exceeds the context window");
  }
  return max_context_chars - overhead;
}

std::string truncate_utf8(std::string s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return s;
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  s.resize(cut);
  return s;
}

}  // namespace

std::vector<std::vector<std::string>> pack_contexts(const RenderedPrompt& prompt, std::span<const std::string> contexts,
                                                    std::size_t max_context_chars) {
  const auto budget = context_budget(prompt, max_context_chars);
  std::vector<std::vector<std::string>> batches;
  std::vector<std::string> current;
  std::size_t used = 0;
  for (const auto& raw : contexts) {
    auto ctx = truncate_utf8(raw, budget);
    std::size_t extra = current.empty() ? ctx.size() : ctx.size() + kContextSeparator.size();
    if (!current.empty() && used + extra > budget) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
      extra = ctx.size();
    }
    used += extra;
    current.push_back(std::move(ctx));
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

std::string tree_summarize(ChatProvider& provider, const ModelConfig& config, const RenderedPrompt& prompt,
                           std::span<const std::string> contexts) {
  std::vector<std::string> level(contexts.begin(), contexts.end());
  while (true) {
    auto batches = pack_contexts(prompt, level, config.max_context_chars);
    if (batches.size() <= 1) {
      return chat_complete(provider, config, prompt.compose(batches.empty() ? std::vector<std::string>{} : batches[0]));
    }
    std::vector<std::string> answers;
    answers.reserve(batches.size());
    for (const auto& batch : batches) answers.push_back(chat_complete(provider, config, prompt.compose(batch)));
    if (answers.size() >= level.size()) {
      // No reduction: halve every answer so that at least pairs fit next time.
      auto half = context_budget(prompt, config.max_context_chars) / 2;
      auto limit = half > kContextSeparator.size() ? half - kContextSeparator.size() : 1;
      for (auto& a : answers) a = truncate_utf8(std::move(a), limit);
    }
    level = std::move(answers);
  }
}

// ---------------------------------------------------------------------------
// Response parsing

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::no: return "no";
    case Verdict::not_applicable: return "n/a";
    case Verdict::unknown: return "unknown";
  }
  return "unknown";
}

Verdict verdict_from_string(std::string_view s) {
  auto v = text::normalize_title(s);
  if (v == "yes" || v == "y" || v == "true") return Verdict::yes;
  if (v == "no" || v == "n" || v == "false") return Verdict::no;
  if (v == "n a" || v == "na" || v == "not applicable" || v == "none") return Verdict::not_applicable;
  return Verdict::unknown;
}

namespace {

// End (exclusive) of the object opening at `open`, or npos when truncated.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  char quote = 0;
  bool escape = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (quote) {
      if (escape) {
        escape = false;
      } else if (c == '\\') {
        escape = true;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"') quote = c;
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

// Outside-of-string scan: drops trailing commas and maps bare Python
// literals, appending missing closers for truncated replies.
std::string repair_json(std::string s) {
  s = replace_all(std::move(s), "\xE2\x80\x9C", "\"");
  s = replace_all(std::move(s), "\xE2\x80\x9D", "\"");
  s = replace_all(std::move(s), "\xE2\x80\x98", "'");
  s = replace_all(std::move(s), "\xE2\x80\x99", "'");
  if (s.find('"') == std::string::npos) std::replace(s.begin(), s.end(), '\'', '"');

  std::string out;
  std::vector<char> closers;
  bool in_str = false;
  bool escape = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      out.push_back(c);
      if (escape) {
        escape = false;
      } else if (c == '\\') {
        escape = true;
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '"') {
      in_str = true;
    } else if (c == '{') {
      closers.push_back('}');
    } else if (c == '[') {
      closers.push_back(']');
    } else if ((c == '}' || c == ']') && !closers.empty()) {
      closers.pop_back();
      while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
      if (!out.empty() && out.back() == ',') out.pop_back();
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
      auto word = s.substr(i, j - i);
      if (word == "True") word = "true";
      if (word == "False") word = "false";
      if (word == "None") word = "null";
      out += word;
      i = j - 1;
      continue;
    }
    out.push_back(c);
  }
  if (in_str) out.push_back('"');
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
  if (!out.empty() && out.back() == ',') out.pop_back();
  while (!closers.empty()) {
    out.push_back(closers.back());
    closers.pop_back();
  }
  return out;
}

std::optional<nlohmann::json> parse_object(const std::string& candidate) {
  auto j = nlohmann::json::parse(candidate, nullptr, false, true);
  if (!j.is_discarded() && j.is_object()) return j;
  j = nlohmann::json::parse(repair_json(candidate), nullptr, false, true);
  if (!j.is_discarded() && j.is_object()) return j;
  return std::nullopt;
}

std::optional<nlohmann::json> first_object(std::string_view s) {
  for (std::size_t p = s.find('{'); p != std::string_view::npos; p = s.find('{', p + 1)) {
    auto end = matching_brace(s, p);
    auto candidate = std::string(s.substr(p, end == std::string_view::npos ? std::string_view::npos : end - p));
    if (auto j = parse_object(candidate)) return j;
  }
  return std::nullopt;
}

std::string key_of(std::string_view k) {
  std::string out;
  for (char c : k)
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::string as_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  return v.dump();
}

bool is_ordinal_token(std::string_view t) {
  if (t.empty()) return false;
  if (std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) return true;
  return t.size() == 1 && std::isalpha(static_cast<unsigned char>(t[0]));
}

std::vector<std::string> tokens_without_prefix(std::string_view name) {
  auto tokens = text::split(text::normalize_title(name), ' ');
  tokens.erase(std::remove(tokens.begin(), tokens.end(), std::string()), tokens.end());
  std::size_t i = 0;
  while (i < tokens.size() && (tokens[i] == "section" || tokens[i] == "sec" || tokens[i] == "appendix")) ++i;
  tokens.erase(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(i));
  return tokens;
}

}  // namespace

std::optional<nlohmann::json> extract_json_object(std::string_view raw) {
  auto fence = raw.find("```");
  if (fence != std::string_view::npos) {
    auto body_start = raw.find('\n', fence);
    auto close = raw.find("```", fence + 3);
    if (body_start != std::string_view::npos && close != std::string_view::npos && close > body_start) {
      if (auto j = first_object(raw.substr(body_start, close - body_start))) return j;
    }
  }
  return first_object(raw);
}

std::string normalize_section_name(std::string_view name) {
  auto tokens = tokens_without_prefix(name);
  std::size_t i = 0;
  while (i + 1 < tokens.size() && is_ordinal_token(tokens[i])) ++i;
  std::string out;
  for (std::size_t k = i; k < tokens.size(); ++k) {
    if (!out.empty()) out.push_back(' ');
    out += tokens[k];
  }
  return out;
}

std::optional<std::string> resolve_section_name(std::string_view name, std::span<const std::string> valid_sections) {
  auto tokens = tokens_without_prefix(name);
  if (tokens.empty()) return std::nullopt;
  std::vector<std::string> matches;
  if (tokens.size() == 1 && is_ordinal_token(tokens[0])) {
    for (const auto& v : valid_sections) {
      auto vt = tokens_without_prefix(v);
      if (vt.size() > 1 && text::iequals(vt[0], tokens[0]) && is_ordinal_token(vt[0])) matches.push_back(v);
    }
  }
  if (matches.empty()) {
    auto norm = normalize_section_name(name);
    for (const auto& v : valid_sections)
      if (normalize_section_name(v) == norm) matches.push_back(v);
  }
  if (matches.size() != 1) return std::nullopt;
  return matches.front();
}

LlmAnswer parse_answer(std::string_view raw, std::span<const std::string> valid_sections) {
  auto obj = extract_json_object(raw);
  if (!obj) throw Error(ErrorCode::unparseable_response, "no JSON object found in model response");

  std::optional<nlohmann::json> answer;
  std::optional<nlohmann::json> section;
  std::optional<nlohmann::json> justification;
  for (auto& [k, v] : obj->items()) {
    auto key = key_of(k);
    if (key == "answer" || key == "verdict") answer = v;
    if (key == "sectionname" || key == "section" || key == "sections") section = v;
    if (key == "justification" || key == "reason" || key == "explanation") justification = v;
  }
  if (!answer && !section && !justification) {
    throw Error(ErrorCode::unparseable_response, "JSON object lacks answer, section name and justification keys");
  }

  LlmAnswer a;
  a.raw_response = std::string(raw);
  a.justification = justification ? std::string(text::trim(as_text(*justification))) : std::string();
  a.verdict = answer ? verdict_from_string(as_text(*answer)) : Verdict::unknown;

  auto flag = [&](std::string reason) {
    a.needs_review = true;
    if (!a.review_reason.empty()) a.review_reason += "; ";
    a.review_reason += reason;
  };

  if (section) {
    if (section->is_array()) {
      std::vector<std::string> names;
      for (const auto& s : *section) names.push_back(as_text(s));
      a.raw_section_name = names.empty() ? std::string() : names.front();
      for (std::size_t i = 1; i < names.size(); ++i) a.raw_section_name += ", " + names[i];
      if (names.size() == 1) {
        a.section_name = resolve_section_name(names.front(), valid_sections);
      } else if (a.verdict == Verdict::yes) {
        flag("several sections cited");
      }
    } else {
      a.raw_section_name = std::string(text::trim(as_text(*section)));
      a.section_name = resolve_section_name(a.raw_section_name, valid_sections);
    }
  }

  switch (a.verdict) {
    case Verdict::yes:
      if (!a.section_name && !a.needs_review) {
        flag(a.raw_section_name.empty() ? "no section cited"
                                        : "section '" + a.raw_section_name + "' does not match the paper");
      }
      break;
    case Verdict::no:
      a.section_name.reset();
      if (a.justification.empty()) flag("no justification given");
      break;
    case Verdict::not_applicable:
      a.section_name.reset();
      flag("answered not applicable");
      break;
    case Verdict::unknown:
      flag(answer ? "unrecognized answer '" + as_text(*answer) + "'" : "no answer given");
      break;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Per-question driver

std::string_view outcome_qid(const QuestionOutcome& o) {
  return std::visit([](const auto& v) -> std::string_view { return v.qid; }, o);
}

std::string retrieval_query(const ChecklistQuestion& q) { return q.text + "\n" + q.guidance; }

QuestionOutcome answer_question(const ChecklistQuestion& q, const AnswerContext& ctx) {
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  };
  RenderedPrompt prompt;
  try {
    prompt = render_prompt(ctx.bank, q, ctx.paper);
  } catch (const Error& e) {
    return QuestionFailure{q.qid, e.code(), e.what(), {}, ctx.config.model_id, elapsed()};
  }
  std::string last_prompt = prompt.text;
  try {
    std::optional<std::set<NodeId>> filter;
    if (!q.section_filter.empty()) {
      auto names = resolve_section_roles(q.section_filter, ctx.paper);
      if (!names.empty()) filter = lineage(ctx.store, std::set<std::string>(names.begin(), names.end()));
    }
    std::vector<std::string> contexts;
    if (!ctx.index.empty()) {
      auto result = retrieve(ctx.store, ctx.index, retrieval_query(q), filter, ctx.top_k);
      for (auto id : result.parent_ids) {
        const auto& node = ctx.store.at(id);
        contexts.push_back(std::string(kSectionLabel) + node.section_name + "\n" + node.text);
      }
    }
    // Provenance records the prompt of the final (root) call.
    RecordingChatProvider recorder(std::shared_ptr<ChatProvider>(&ctx.provider, [](ChatProvider*) {}));
    auto raw = tree_summarize(recorder, ctx.config, prompt, contexts);
    auto sent = recorder.requests();
    if (!sent.empty()) last_prompt = sent.back().prompt;

    LlmAnswer answer;
    try {
      answer = parse_answer(raw, prompt.valid_sections);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::unparseable_response) throw;
      std::string repair = prompt.compose({}) + "\n\nYour previous reply could not be parsed:\n" +
                           raw.substr(0, std::min<std::size_t>(raw.size(), 2000)) +
                           "\n\nRespond with only the JSON object with the keys 'answer', 'section name', and "
                           "'justification'.";
      last_prompt = repair;
      raw = chat_complete(ctx.provider, ctx.config, repair);
      try {
        answer = parse_answer(raw, prompt.valid_sections);
      } catch (const Error& again) {
        if (again.code() != ErrorCode::unparseable_response) throw;
        answer = LlmAnswer{};
        answer.raw_response = raw;
        answer.needs_review = true;
        answer.review_reason = "model reply could not be parsed after one repair attempt";
      }
    }
    answer.qid = q.qid;
    answer.model_id = ctx.config.model_id;
    answer.prompt = last_prompt;
    answer.elapsed_ms = elapsed();
    return answer;
  } catch (const Error& e) {
    return QuestionFailure{q.qid, e.code(), e.what(), last_prompt, ctx.config.model_id, elapsed()};
  } catch (const std::exception& e) {
    return QuestionFailure{q.qid, ErrorCode::provider_error, e.what(), last_prompt, ctx.config.model_id, elapsed()};
  }
}

std::vector<QuestionOutcome> answer_all(const AnswerContext& ctx,
                                        const std::function<void(const ChecklistQuestion&)>& on_start) {
  std::vector<QuestionOutcome> out;
  auto questions = ctx.bank.llm_questions();
  if (!ctx.parallel_questions) {
    for (const auto* q : questions) {
      if (on_start) on_start(*q);
      out.push_back(answer_question(*q, ctx));
    }
    return out;
  }
  std::vector<std::future<QuestionOutcome>> pending;
  for (const auto* q : questions) {
    if (on_start) on_start(*q);
    pending.push_back(std::async(std::launch::async, [q, &ctx] { return answer_question(*q, ctx); }));
  }
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

}  // namespace aclready
