#pragma once

#include "aclready/embedding.hpp"
#include "aclready/tex_ingest.hpp"

#include <nlohmann/json.hpp>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace aclready {

struct NodeId {
  std::uint32_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class NodeKind { section, parent, child };

std::string_view to_string(NodeKind kind);

struct ChunkNode {
  NodeId id;
  NodeKind kind = NodeKind::section;
  std::string text;
  std::string section_name;
  // Siblings of the same kind within the owning section (section nodes chain
  // across the whole document).
  std::optional<NodeId> prev;
  std::optional<NodeId> next;
  // child -> parent, parent -> section, none for section nodes.
  std::optional<NodeId> parent;

  friend bool operator==(const ChunkNode&, const ChunkNode&) = default;
};

struct ChunkingConfig {
  double breakpoint_percentile = 95.0;
  std::size_t max_parent_chars = 2048;
  std::size_t embed_concurrency = 4;
};

// Id-keyed node collection. Ids are dense: node `i` has id `i`.
class NodeStore {
 public:
  const std::vector<ChunkNode>& nodes() const { return nodes_; }
  const ChunkNode& at(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // section display_name -> every node owned by that section, ascending id.
  const std::map<std::string, std::vector<NodeId>>& section_index() const { return section_index_; }
  // Section names in document order.
  const std::vector<std::string>& section_order() const { return section_order_; }

  std::vector<NodeId> ids_of_kind(NodeKind kind) const;
  std::vector<NodeId> parents_of_section(const std::string& section_name) const;
  std::vector<NodeId> children_of(NodeId parent) const;

  NodeId add(ChunkNode node);
  void link_chain(const std::vector<NodeId>& ids);

  friend bool operator==(const NodeStore&, const NodeStore&) = default;

 private:
  std::vector<ChunkNode> nodes_;
  std::map<std::string, std::vector<NodeId>> section_index_;
  std::vector<std::string> section_order_;
};

struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Rule-based splitter: terminal punctuation followed by whitespace, and
// paragraph breaks. Spans cover every non-whitespace character of `text`.
std::vector<SentenceSpan> split_sentences(std::string_view text);

// Linear-interpolation percentile (p in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> values, double p);

struct ParentChunk {
  std::string text;
  std::vector<std::string> children;
};

// One kind=section node per retained section, chained in document order.
NodeStore build_section_nodes(const ParsedPaper& paper);

// Splits a section body at adjacent-sentence cosine distances above the
// configured percentile, then greedily packs the pieces into parents of at
// most max_parent_chars (a single oversized child forms its own parent).
std::vector<ParentChunk> semantic_split(std::string_view section_body, Embedder& embedder,
                                        const ChunkingConfig& config = {});

// Section nodes plus parent/child chunks for every section. Sections are
// split concurrently with at most config.embed_concurrency workers; the
// resulting graph does not depend on scheduling.
NodeStore build_chunk_graph(const ParsedPaper& paper, Embedder& embedder, const ChunkingConfig& config = {});

// Ids of the section, parent and child nodes owned by the named sections.
// Throws Error(unknown_section).
std::set<NodeId> lineage(const NodeStore& store, const std::set<std::string>& section_names);

void to_json(nlohmann::json& j, const ChunkNode& n);
void to_json(nlohmann::json& j, const NodeStore& s);

}  // namespace aclready
