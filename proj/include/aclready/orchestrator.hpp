#pragma once

#include "aclready/checklist.hpp"
#include "aclready/chunk_graph.hpp"
#include "aclready/embedding_index.hpp"
#include "aclready/http.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace aclready {

struct ModelConfig {
  std::string provider_base_url = "https://api.openai.com/v1";
  std::string model_id = "gpt-3.5-turbo-0613";
  double temperature = 0.0;
  std::size_t max_context_chars = 12000;
  std::string api_key_env = "OPENAI_API_KEY";
  RetryPolicy retry;
};

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  std::string prompt;
};

// Implementations must be safe to share between threads.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // Throws ProviderError; transient() marks retryable failures.
  virtual std::string complete(const ChatRequest& request) = 0;
};

// OpenAI-compatible /chat/completions client. Also serves hosted open models
// behind the same protocol (set provider_base_url and model_id).
class OpenAiChatProvider final : public ChatProvider {
 public:
  explicit OpenAiChatProvider(ModelConfig config, std::shared_ptr<HttpTransport> transport = nullptr);
  std::string complete(const ChatRequest& request) override;

  static nlohmann::json request_body(const ChatRequest& request);

 private:
  ModelConfig config_;
  std::shared_ptr<HttpTransport> transport_;
};

// Deterministic offline model. Answers "yes" citing the first labelled
// context ("Section: <name>") that shares a word of seven or more letters
// with the question, or the first "yes" among combined answers; "no"
// otherwise.
class StubChatProvider final : public ChatProvider {
 public:
  std::string complete(const ChatRequest& request) override;
};

class FunctionChatProvider final : public ChatProvider {
 public:
  explicit FunctionChatProvider(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest& request) override { return fn_(request); }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

// Records every request and charges time spent in the wrapped provider to a
// BusyClock (shared with other providers to measure their union).
class RecordingChatProvider final : public ChatProvider {
 public:
  explicit RecordingChatProvider(std::shared_ptr<ChatProvider> inner,
                                 std::shared_ptr<BusyClock> clock = std::make_shared<BusyClock>())
      : inner_(std::move(inner)), clock_(std::move(clock)) {}
  std::string complete(const ChatRequest& request) override;

  std::vector<ChatRequest> requests() const;
  std::size_t call_count() const;
  std::int64_t elapsed_nanos() const { return clock_->nanos(); }

 private:
  std::shared_ptr<ChatProvider> inner_;
  mutable std::mutex mutex_;
  std::vector<ChatRequest> requests_;
  std::shared_ptr<BusyClock> clock_;
};

// One provider call with the configured temperature. Throws
// Error(context_overflow) without calling the provider when the prompt is
// longer than max_context_chars; transient ProviderErrors are retried.
std::string chat_complete(ChatProvider& provider, const ModelConfig& config, const std::string& prompt);

// Packs contexts greedily into batches whose composed prompt fits the context
// window, answers each batch with the question prompt, then recursively
// treats the batch answers as contexts until a single answer remains.
std::string tree_summarize(ChatProvider& provider, const ModelConfig& config, const RenderedPrompt& prompt,
                           std::span<const std::string> contexts);

// Batches tree_summarize would form at the first level (exposed for tests
// and call-count accounting).
std::vector<std::vector<std::string>> pack_contexts(const RenderedPrompt& prompt, std::span<const std::string> contexts,
                                                    std::size_t max_context_chars);

enum class Verdict { yes, no, not_applicable, unknown };

std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);

struct LlmAnswer {
  std::string qid;
  Verdict verdict = Verdict::unknown;
  // Resolved display name of a retained section.
  std::optional<std::string> section_name;
  std::string raw_section_name;
  std::string justification;
  std::string raw_response;
  std::string model_id;
  std::string prompt;
  std::int64_t elapsed_ms = 0;
  bool needs_review = false;
  std::string review_reason;
};

// Text of the first well-formed JSON object in a model reply, tolerating
// code fences, surrounding prose, trailing commas and single quotes.
std::optional<nlohmann::json> extract_json_object(std::string_view raw);

// Lowercase, punctuation and leading "section"/ordinal tokens removed.
std::string normalize_section_name(std::string_view name);

// Exact match after normalization, or a bare ordinal ("3", "Section 3").
std::optional<std::string> resolve_section_name(std::string_view name, std::span<const std::string> valid_sections);

// Throws Error(unparseable_response) when no JSON object with any of the
// expected keys can be recovered. Validation failures set needs_review.
LlmAnswer parse_answer(std::string_view raw, std::span<const std::string> valid_sections);

struct QuestionFailure {
  std::string qid;
  ErrorCode code = ErrorCode::provider_error;
  std::string message;
  std::string prompt;
  std::string model_id;
  std::int64_t elapsed_ms = 0;
};

using QuestionOutcome = std::variant<LlmAnswer, QuestionFailure>;

std::string_view outcome_qid(const QuestionOutcome& o);

struct AnswerContext {
  const QuestionBank& bank;
  const ParsedPaper& paper;
  const NodeStore& store;
  const EmbeddingIndex& index;
  ChatProvider& provider;
  const ModelConfig& config;
  std::size_t top_k = 5;
  // Answer questions concurrently (results and on_start stay in bank order).
  bool parallel_questions = false;
};

// Retrieval query for a question: its text plus its guidance.
std::string retrieval_query(const ChecklistQuestion& q);

// retrieve (restricted by the question's section filter) -> render_prompt ->
// tree_summarize -> parse_answer, with one repair re-prompt on unparseable
// output. Errors become a QuestionFailure; nothing is thrown.
QuestionOutcome answer_question(const ChecklistQuestion& q, const AnswerContext& ctx);

// All llm-mode questions in bank order. `on_start` fires before each one.
std::vector<QuestionOutcome> answer_all(const AnswerContext& ctx,
                                        const std::function<void(const ChecklistQuestion&)>& on_start = {});

}  // namespace aclready
