#pragma once

#include "aclready/checklist.hpp"
#include "aclready/chunk_graph.hpp"
#include "aclready/config.hpp"
#include "aclready/embedding.hpp"
#include "aclready/error.hpp"
#include "aclready/orchestrator.hpp"
#include "aclready/response.hpp"
#include "aclready/tex_ingest.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace aclready {

enum class Stage { uploaded, parsing, chunking, embedding, inferencing, review, done, failed };

std::string_view to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view s);
bool is_terminal(Stage s);

struct ProgressEvent {
  std::uint64_t seq = 0;  // per job, from 1
  std::string job_id;
  Stage stage = Stage::uploaded;
  std::optional<std::string> qid;     // inferencing only
  std::optional<std::string> detail;  // failure reason, counts
  std::string timestamp;
};

void to_json(nlohmann::json& j, const ProgressEvent& e);
void from_json(const nlohmann::json& j, ProgressEvent& e);

struct Providers {
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<ChatProvider> chat;
};

// Offline stubs for both models, or the configured HTTP clients.
Providers make_providers(const AppConfig& config, bool stub);

struct PipelineRun {
  JobRecord job;  // review on success, failed otherwise
  std::optional<ParsedPaper> paper;
  std::optional<NodeStore> store;
  std::optional<ErrorCode> failure;
  std::size_t provider_calls = 0;
};

using StageCallback = std::function<void(Stage, const std::optional<std::string>& qid,
                                         const std::optional<std::string>& detail)>;

struct PipelineOptions {
  // Persisted embedding cache (empty for in-memory only).
  std::filesystem::path embedding_cache;
};

// parse -> chunk -> embed -> answer every llm question -> assemble. Never
// throws for pipeline errors: they end the run in the failed state with a
// failed event. `job` supplies id, filename and created_at.
PipelineRun run_pipeline(JobRecord job, const RawTexDocument& doc, const QuestionBank& bank, const AppConfig& config,
                         const Providers& providers, const StageCallback& on_stage = {},
                         const PipelineOptions& options = {});

}  // namespace aclready
