#pragma once

#include "aclready/chunk_graph.hpp"
#include "aclready/embedding.hpp"
#include "aclready/orchestrator.hpp"
#include "aclready/tex_ingest.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace aclready {

struct ServiceConfig {
  std::size_t max_concurrent_jobs = 2;
  std::size_t max_upload_bytes = 10 * 1024 * 1024;
  int retention_days = 7;
};

struct AppConfig {
  ModelConfig model;
  EmbeddingConfig embedding;
  ChunkingConfig chunking;
  IngestOptions ingest;
  std::size_t top_k = 5;
  bool parallel_questions = false;
  ServiceConfig service;
};

// Line-oriented "key = value" text; '#' starts a comment line. Keys:
//   model.base_url model.id model.temperature model.api_key_env
//   model.max_context_chars model.max_retries
//   embedding.base_url embedding.id embedding.api_key_env embedding.max_batch
//   chunking.breakpoint_percentile chunking.max_parent_chars
//   chunking.embed_concurrency
//   retrieval.top_k
//   orchestrator.parallel_questions
//   ingest.excluded_sections (comma separated titles)
//   service.max_concurrent_jobs service.max_upload_bytes service.retention_days
// API keys are read from the environment only; a key-like entry is rejected.
// Throws Error(config_error) naming the line on any problem.
AppConfig parse_config(std::string_view text, const std::string& source = "config");
AppConfig load_config(const std::filesystem::path& path);

}  // namespace aclready
