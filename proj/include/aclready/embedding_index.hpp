#pragma once

#include "aclready/chunk_graph.hpp"
#include "aclready/embedding.hpp"

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace aclready {

struct ChildHit {
  NodeId child;
  double score = 0.0;

  friend bool operator==(const ChildHit&, const ChildHit&) = default;
};

struct RetrievalResult {
  // Deduplicated, best child score first, ties by ascending id.
  std::vector<NodeId> parent_ids;
  std::vector<ChildHit> child_hits;

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

// Exact in-memory index over the child nodes of one NodeStore.
class EmbeddingIndex {
 public:
  EmbeddingIndex(std::shared_ptr<Embedder> embedder, std::vector<std::pair<NodeId, EmbeddingVector>> entries);

  // Embeds every child node of `store` (batched) and indexes it.
  static EmbeddingIndex build(const NodeStore& store, std::shared_ptr<Embedder> embedder);

  const std::vector<std::pair<NodeId, EmbeddingVector>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  Embedder& embedder() const { return *embedder_; }

 private:
  std::shared_ptr<Embedder> embedder_;
  std::vector<std::pair<NodeId, EmbeddingVector>> entries_;
};

// Scores children (restricted to `filter` when given), keeps the top_k by
// score (ties: lower id first) and maps each hit to its parent chunk.
// Throws Error(empty_index).
RetrievalResult retrieve(const NodeStore& store, const EmbeddingIndex& index, const std::string& query_text,
                         const std::optional<std::set<NodeId>>& filter, std::size_t top_k = 5);

RetrievalResult retrieve(const NodeStore& store, const EmbeddingIndex& index, const EmbeddingVector& query,
                         const std::optional<std::set<NodeId>>& filter, std::size_t top_k = 5);

// Parent texts in retrieval order.
std::vector<std::string> parent_texts(const NodeStore& store, const RetrievalResult& result);

}  // namespace aclready
