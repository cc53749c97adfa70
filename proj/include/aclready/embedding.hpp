#pragma once

#include "aclready/http.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace aclready {

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
};

// Cosine similarity in [-1, 1]. Throws Error(dimension_mismatch) or
// Error(zero_vector).
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct EmbeddingConfig {
  std::string provider_base_url = "https://api.openai.com/v1";
  std::string model_id = "text-embedding-ada-002";
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t max_batch = 64;
  RetryPolicy retry;
};

// Implementations must be safe to call from several threads at once.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string model_id() const = 0;
  // One vector per input, in input order. Throws Error(embedder_unavailable).
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;

  EmbeddingVector embed(const std::string& text);
};

// Deterministic offline embedder: signed feature hashing of lowercase word
// unigrams, L2-normalized. Texts sharing vocabulary land close together.
class StubEmbedder final : public Embedder {
 public:
  explicit StubEmbedder(std::size_t dimensions = 128) : dimensions_(dimensions) {}

  std::string model_id() const override { return "stub-hash-" + std::to_string(dimensions_); }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  std::size_t dimensions_;
};

// Client for the OpenAI-compatible /embeddings endpoint. Transient failures
// are retried per the configured policy before giving up.
class OpenAiEmbedder final : public Embedder {
 public:
  explicit OpenAiEmbedder(EmbeddingConfig config, std::shared_ptr<HttpTransport> transport = nullptr);

  std::string model_id() const override { return config_.model_id; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  EmbeddingConfig config_;
  std::shared_ptr<HttpTransport> transport_;
};

// Memoizes (model_id, content hash) -> vector and optionally persists the
// table as JSON so reruns avoid duplicate provider calls.
class CachingEmbedder final : public Embedder {
 public:
  CachingEmbedder(std::shared_ptr<Embedder> inner, std::filesystem::path cache_file = {});

  std::string model_id() const override { return inner_->model_id(); }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

  void flush() const;
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::shared_ptr<Embedder> inner_;
  std::filesystem::path cache_file_;
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<double>> cache_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

// Charges time spent inside a wrapped embedder to a BusyClock.
class TimedEmbedder final : public Embedder {
 public:
  TimedEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<BusyClock> clock)
      : inner_(std::move(inner)), clock_(std::move(clock)) {}

  std::string model_id() const override { return inner_->model_id(); }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  std::shared_ptr<Embedder> inner_;
  std::shared_ptr<BusyClock> clock_;
};

}  // namespace aclready
