#include "aclready/embedding.hpp"

#include "aclready/error.hpp"
#include "aclready/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace aclready {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch, "dimension mismatch: " + std::to_string(a.size()) + " vs " +
                                                   std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_vector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

EmbeddingVector Embedder::embed(const std::string& text) {
  std::string one[] = {text};
  auto out = embed_batch(one);
  return std::move(out.front());
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<EmbeddingVector> StubEmbedder::embed_batch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::vector<double> v(dimensions_, 0.0);
    std::string word;
    auto flush = [&] {
      if (word.empty()) return;
      auto h = fnv1a(word);
      v[h % dimensions_] += (h >> 63) ? -1.0 : 1.0;
      word.clear();
    };
    for (char c : t) {
      if (std::isalnum(static_cast<unsigned char>(c))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      } else {
        flush();
      }
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
      v[0] = 1.0;
      norm = 1.0;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    out.push_back({std::move(v), model_id()});
  }
  return out;
}

OpenAiEmbedder::OpenAiEmbedder(EmbeddingConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (config_.model_id.empty()) throw Error(ErrorCode::config_error, "embedding model id must not be empty");
  if (!transport_) transport_ = std::make_shared<HttplibTransport>();
  if (config_.max_batch == 0) config_.max_batch = 1;
}

std::vector<EmbeddingVector> OpenAiEmbedder::embed_batch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  const auto url = join_url(config_.provider_base_url, "/embeddings");
  const auto key = api_key_from_env(config_.api_key_env);
  for (std::size_t start = 0; start < texts.size(); start += config_.max_batch) {
    auto batch = texts.subspan(start, std::min(config_.max_batch, texts.size() - start));
    nlohmann::json request{{"model", config_.model_id}, {"input", std::vector<std::string>(batch.begin(), batch.end())}};
    nlohmann::json response;
    try {
      response = with_retries(config_.retry, [&] { return post_json(*transport_, url, request, key); });
    } catch (const ProviderError& e) {
      throw Error(ErrorCode::embedder_unavailable, std::string("embedding provider unavailable: ") + e.what());
    }
    if (!response.contains("data") || !response["data"].is_array() || response["data"].size() != batch.size()) {
      throw Error(ErrorCode::embedder_unavailable, "embedding response has wrong shape");
    }
    std::vector<EmbeddingVector> vectors(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& item = response["data"][i];
      std::size_t idx = item.value("index", i);
      if (idx >= batch.size() || !item.contains("embedding") || !item["embedding"].is_array()) {
        throw Error(ErrorCode::embedder_unavailable, "embedding response item malformed");
      }
      vectors[idx] = {item["embedding"].get<std::vector<double>>(), config_.model_id};
    }
    for (auto& v : vectors) out.push_back(std::move(v));
  }
  return out;
}

CachingEmbedder::CachingEmbedder(std::shared_ptr<Embedder> inner, std::filesystem::path cache_file)
    : inner_(std::move(inner)), cache_file_(std::move(cache_file)) {
  if (cache_file_.empty() || !std::filesystem::exists(cache_file_)) return;
  std::ifstream in(cache_file_);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("entries")) return;
  for (auto& [k, v] : j["entries"].items()) cache_[k] = v.get<std::vector<double>>();
}

std::vector<EmbeddingVector> CachingEmbedder::embed_batch(std::span<const std::string> texts) {
  const auto model = inner_->model_id();
  std::vector<std::string> keys;
  keys.reserve(texts.size());
  for (const auto& t : texts) keys.push_back(model + ":" + text::sha256_hex(t));

  std::vector<std::string> missing;
  std::vector<std::size_t> missing_idx;
  std::vector<EmbeddingVector> out(texts.size());
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto it = cache_.find(keys[i]);
      if (it != cache_.end()) {
        out[i] = {it->second, model};
        ++hits_;
      } else {
        missing.push_back(texts[i]);
        missing_idx.push_back(i);
      }
    }
  }
  if (!missing.empty()) {
    auto fresh = inner_->embed_batch(missing);
    std::lock_guard lock(mutex_);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      cache_[keys[missing_idx[k]]] = fresh[k].values;
      out[missing_idx[k]] = std::move(fresh[k]);
      ++misses_;
    }
  }
  return out;
}

void CachingEmbedder::flush() const {
  if (cache_file_.empty()) return;
  nlohmann::json j;
  {
    std::lock_guard lock(mutex_);
    j["entries"] = cache_;
  }
  std::ofstream out(cache_file_);
  if (!out) throw Error(ErrorCode::io_error, "cannot write embedding cache " + cache_file_.string());
  out << j.dump();
}

std::vector<EmbeddingVector> TimedEmbedder::embed_batch(std::span<const std::string> texts) {
  BusyClock::Scope busy(*clock_);
  return inner_->embed_batch(texts);
}

}  // namespace aclready
