#include "aclready/pipeline.hpp"

#include "aclready/embedding_index.hpp"

#include <atomic>
#include <chrono>

namespace aclready {

namespace {

constexpr Stage kStages[] = {Stage::uploaded,    Stage::parsing, Stage::chunking, Stage::embedding,
                             Stage::inferencing, Stage::review,  Stage::done,     Stage::failed};

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::uploaded: return "uploaded";
    case Stage::parsing: return "parsing";
    case Stage::chunking: return "chunking";
    case Stage::embedding: return "embedding";
    case Stage::inferencing: return "inferencing";
    case Stage::review: return "review";
    case Stage::done: return "done";
    case Stage::failed: return "failed";
  }
  return "failed";
}

std::optional<Stage> stage_from_string(std::string_view s) {
  for (auto st : kStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool is_terminal(Stage s) { return s == Stage::done || s == Stage::failed; }

void to_json(nlohmann::json& j, const ProgressEvent& e) {
  j = nlohmann::json{{"seq", e.seq},
                     {"job_id", e.job_id},
                     {"stage", to_string(e.stage)},
                     {"qid", e.qid ? nlohmann::json(*e.qid) : nlohmann::json(nullptr)},
                     {"detail", e.detail ? nlohmann::json(*e.detail) : nlohmann::json(nullptr)},
                     {"timestamp", e.timestamp}};
}

void from_json(const nlohmann::json& j, ProgressEvent& e) {
  e = ProgressEvent{};
  e.seq = j.at("seq").get<std::uint64_t>();
  e.job_id = j.value("job_id", std::string());
  auto st = stage_from_string(j.at("stage").get<std::string>());
  if (!st) throw Error(ErrorCode::io_error, "unknown stage " + j.at("stage").dump());
  e.stage = *st;
  if (j.contains("qid") && j["qid"].is_string()) e.qid = j["qid"].get<std::string>();
  if (j.contains("detail") && j["detail"].is_string()) e.detail = j["detail"].get<std::string>();
  e.timestamp = j.value("timestamp", std::string());
}

Providers make_providers(const AppConfig& config, bool stub) {
  if (stub) return {std::make_shared<StubEmbedder>(), std::make_shared<StubChatProvider>()};
  return {std::make_shared<OpenAiEmbedder>(config.embedding), std::make_shared<OpenAiChatProvider>(config.model)};
}

PipelineRun run_pipeline(JobRecord job, const RawTexDocument& doc, const QuestionBank& bank, const AppConfig& config,
                         const Providers& providers, const StageCallback& on_stage, const PipelineOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  auto busy = std::make_shared<BusyClock>();
  auto timed = std::make_shared<TimedEmbedder>(providers.embedder, busy);
  auto cached = std::make_shared<CachingEmbedder>(timed, options.embedding_cache);
  RecordingChatProvider chat(providers.chat, busy);

  PipelineRun run;
  run.job = std::move(job);
  run.job.bank_version = bank.version;
  auto emit = [&](Stage s, std::optional<std::string> qid = std::nullopt,
                  std::optional<std::string> detail = std::nullopt) {
    if (on_stage) on_stage(s, qid, detail);
  };
  auto advance = [&](JobState st, Stage s) {
    transition(run.job, st);
    emit(s);
  };
  auto finish_timing = [&] {
    run.job.pipeline_elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.job.provider_elapsed_s = static_cast<double>(busy->nanos()) * 1e-9;
    run.provider_calls = chat.call_count();
  };

  try {
    if (run.job.state != JobState::parsing) transition(run.job, JobState::parsing);
    emit(Stage::parsing);
    run.paper = parse_tex(doc, config.ingest);
    run.job.title = run.paper->title;
    run.job.report = run.paper->report;

    advance(JobState::chunking, Stage::chunking);
    run.store = build_chunk_graph(*run.paper, *cached, config.chunking);

    advance(JobState::embedding, Stage::embedding);
    auto index = EmbeddingIndex::build(*run.store, cached);
    if (!options.embedding_cache.empty()) cached->flush();

    advance(JobState::inferencing, Stage::inferencing);
    AnswerContext ctx{bank, *run.paper, *run.store, index, chat, config.model, config.top_k,
                      config.parallel_questions};
    auto outcomes =
        answer_all(ctx, [&](const ChecklistQuestion& q) { emit(Stage::inferencing, q.qid, std::nullopt); });
    if (!options.embedding_cache.empty()) cached->flush();
    run.job.responses = assemble_responses(bank, outcomes);

    std::size_t failures = 0;
    for (const auto& o : outcomes) failures += std::holds_alternative<QuestionFailure>(o) ? 1 : 0;
    if (!outcomes.empty() && failures == outcomes.size()) {
      const auto& f = std::get<QuestionFailure>(outcomes.front());
      throw Error(f.code, "every question failed; first error: " + f.message);
    }
    finish_timing();
    transition(run.job, JobState::review);
    std::size_t flagged = 0;
    for (const auto& r : run.job.responses) flagged += r.needs_review ? 1 : 0;
    emit(Stage::review, std::nullopt,
         std::to_string(outcomes.size() - failures) + " answered, " + std::to_string(flagged) + " need review");
  } catch (const Error& e) {
    finish_timing();
    run.failure = e.code();
    run.job.failure_reason = std::string(to_string(e.code())) + ": " + e.what();
    run.job.state = JobState::failed;
    emit(Stage::failed, std::nullopt, run.job.failure_reason);
  } catch (const std::exception& e) {
    finish_timing();
    run.failure = ErrorCode::io_error;
    run.job.failure_reason = std::string("internal error: ") + e.what();
    run.job.state = JobState::failed;
    emit(Stage::failed, std::nullopt, run.job.failure_reason);
  }
  return run;
}

}  // namespace aclready
