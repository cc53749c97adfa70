#include "aclready/embedding_index.hpp"

#include "aclready/error.hpp"

#include <algorithm>

namespace aclready {

EmbeddingIndex::EmbeddingIndex(std::shared_ptr<Embedder> embedder,
                               std::vector<std::pair<NodeId, EmbeddingVector>> entries)
    : embedder_(std::move(embedder)), entries_(std::move(entries)) {
  if (entries_.empty()) return;
  const auto dims = entries_.front().second.values.size();
  const auto& model = entries_.front().second.model_id;
  for (const auto& [id, v] : entries_) {
    if (v.values.size() != dims) {
      throw Error(ErrorCode::dimension_mismatch, "index vectors differ in length at node " + std::to_string(id.value));
    }
    if (v.model_id != model) {
      throw Error(ErrorCode::dimension_mismatch, "index mixes embedding models: " + model + " and " + v.model_id);
    }
  }
}

EmbeddingIndex EmbeddingIndex::build(const NodeStore& store, std::shared_ptr<Embedder> embedder) {
  auto ids = store.ids_of_kind(NodeKind::child);
  std::vector<std::string> texts;
  texts.reserve(ids.size());
  for (auto id : ids) texts.push_back(store.at(id).text);
  std::vector<EmbeddingVector> vectors;
  if (!texts.empty()) vectors = embedder->embed_batch(texts);
  if (vectors.size() != ids.size()) {
    throw Error(ErrorCode::embedder_unavailable, "embedder returned a wrong number of vectors");
  }
  std::vector<std::pair<NodeId, EmbeddingVector>> entries;
  entries.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) entries.emplace_back(ids[i], std::move(vectors[i]));
  return EmbeddingIndex(std::move(embedder), std::move(entries));
}

RetrievalResult retrieve(const NodeStore& store, const EmbeddingIndex& index, const std::string& query_text,
                         const std::optional<std::set<NodeId>>& filter, std::size_t top_k) {
  if (index.empty()) throw Error(ErrorCode::empty_index, "retrieval over an empty index");
  return retrieve(store, index, index.embedder().embed(query_text), filter, top_k);
}

RetrievalResult retrieve(const NodeStore& store, const EmbeddingIndex& index, const EmbeddingVector& query,
                         const std::optional<std::set<NodeId>>& filter, std::size_t top_k) {
  if (index.empty()) throw Error(ErrorCode::empty_index, "retrieval over an empty index");
  std::vector<ChildHit> scored;
  scored.reserve(index.size());
  for (const auto& [id, v] : index.entries()) {
    if (filter && !filter->contains(id)) continue;
    scored.push_back({id, cosine(query, v)});
  }
  auto better = [](const ChildHit& a, const ChildHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.child < b.child;
  };
  const auto keep = std::min(std::max<std::size_t>(top_k, 1), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
  scored.resize(keep);

  RetrievalResult result;
  result.child_hits = std::move(scored);
  for (const auto& hit : result.child_hits) {
    auto parent = store.at(hit.child).parent;
    if (!parent) continue;
    if (std::find(result.parent_ids.begin(), result.parent_ids.end(), *parent) == result.parent_ids.end()) {
      result.parent_ids.push_back(*parent);
    }
  }
  return result;
}

std::vector<std::string> parent_texts(const NodeStore& store, const RetrievalResult& result) {
  std::vector<std::string> out;
  out.reserve(result.parent_ids.size());
  for (auto id : result.parent_ids) out.push_back(store.at(id).text);
  return out;
}

}  // namespace aclready
