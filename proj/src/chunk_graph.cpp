#include "aclready/chunk_graph.hpp"

#include "aclready/error.hpp"
#include "aclready/text.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <exception>
#include <thread>

namespace aclready {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::section: return "section";
    case NodeKind::parent: return "parent";
    case NodeKind::child: return "child";
  }
  return "unknown";
}

const ChunkNode& NodeStore::at(NodeId id) const {
  if (id.value >= nodes_.size()) throw std::out_of_range("node id " + std::to_string(id.value));
  return nodes_[id.value];
}

std::vector<NodeId> NodeStore::ids_of_kind(NodeKind kind) const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_)
    if (n.kind == kind) out.push_back(n.id);
  return out;
}

std::vector<NodeId> NodeStore::parents_of_section(const std::string& section_name) const {
  std::vector<NodeId> out;
  auto it = section_index_.find(section_name);
  if (it == section_index_.end()) return out;
  for (auto id : it->second)
    if (nodes_[id.value].kind == NodeKind::parent) out.push_back(id);
  return out;
}

std::vector<NodeId> NodeStore::children_of(NodeId parent) const {
  std::vector<NodeId> out;
  const auto& owner = at(parent);
  for (auto id : section_index_.at(owner.section_name)) {
    const auto& n = nodes_[id.value];
    if (n.kind == NodeKind::child && n.parent == parent) out.push_back(id);
  }
  return out;
}

NodeId NodeStore::add(ChunkNode node) {
  node.id = NodeId{static_cast<std::uint32_t>(nodes_.size())};
  auto [it, inserted] = section_index_.try_emplace(node.section_name);
  if (inserted) section_order_.push_back(node.section_name);
  it->second.push_back(node.id);
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

void NodeStore::link_chain(const std::vector<NodeId>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto& n = nodes_.at(ids[i].value);
    n.prev = i > 0 ? std::optional<NodeId>(ids[i - 1]) : std::nullopt;
    n.next = i + 1 < ids.size() ? std::optional<NodeId>(ids[i + 1]) : std::nullopt;
  }
}

namespace {

constexpr std::array<std::string_view, 29> kAbbreviations = {
    "e.g", "i.e", "al", "fig", "figs", "eq", "eqs", "sec", "secs", "tab", "vs", "cf", "dr",
    "mr", "mrs", "ms", "prof", "no", "nos", "approx", "resp", "inc", "ltd", "jr", "sr", "st", "vol", "pp", "ch"};

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_closer(char c) { return c == ')' || c == '"' || c == '\'' || c == ']' || c == '}'; }

// Word immediately before position `dot`, lowercase, leading brackets removed.
std::string word_before(std::string_view s, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !is_ws(s[b - 1])) --b;
  std::string w = text::to_lower(s.substr(b, dot - b));
  while (!w.empty() && (w.front() == '(' || w.front() == '[' || w.front() == '"')) w.erase(w.begin());
  return w;
}

bool is_abbreviation(std::string_view s, std::size_t dot) {
  auto w = word_before(s, dot);
  if (w.size() == 1 && std::isalpha(static_cast<unsigned char>(w[0]))) return true;  // initials
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), w) != kAbbreviations.end();
}

}  // namespace

std::vector<SentenceSpan> split_sentences(std::string_view s) {
  std::vector<SentenceSpan> spans;
  std::size_t i = 0;
  auto skip_ws = [&](std::size_t p) {
    while (p < s.size() && is_ws(s[p])) ++p;
    return p;
  };
  std::size_t start = skip_ws(0);
  auto close = [&](std::size_t end) {
    std::size_t e = end;
    while (e > start && is_ws(s[e - 1])) --e;
    if (e > start) spans.push_back({start, e});
    start = skip_ws(end);
    i = std::max(i, start);
  };
  i = start;
  while (i < s.size()) {
    char c = s[i];
    if (c == '\n') {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == ' ' || s[j] == '\t' || s[j] == '\r')) ++j;
      if (j < s.size() && s[j] == '\n') {
        close(i);
        continue;
      }
    }
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?')) ++j;
      while (j < s.size() && is_closer(s[j])) ++j;
      if (j == s.size()) {
        close(j);
        break;
      }
      if (is_ws(s[j])) {
        std::size_t k = skip_ws(j);
        bool lower_next = k < s.size() && std::islower(static_cast<unsigned char>(s[k]));
        bool abbrev = c == '.' && j == i + 1 && is_abbreviation(s, i);
        if (k == s.size() || (!lower_next && !abbrev)) {
          close(j);
          continue;
        }
      }
      i = j;
      continue;
    }
    ++i;
  }
  if (start < s.size()) close(s.size());
  return spans;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(rank);
  auto hi = std::min(lo + 1, values.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

NodeStore build_section_nodes(const ParsedPaper& paper) {
  NodeStore store;
  std::vector<NodeId> chain;
  for (const auto& s : paper.sections) {
    ChunkNode n;
    n.kind = NodeKind::section;
    n.text = s.body.empty() ? s.display_name : s.body;
    n.section_name = s.display_name;
    chain.push_back(store.add(std::move(n)));
  }
  store.link_chain(chain);
  return store;
}

std::vector<ParentChunk> semantic_split(std::string_view body, Embedder& embedder, const ChunkingConfig& config) {
  auto sentences = split_sentences(body);
  if (sentences.empty()) return {};
  auto slice = [&](std::size_t b, std::size_t e) { return std::string(body.substr(b, e - b)); };
  if (sentences.size() < 2) {
    auto t = slice(sentences.front().begin, sentences.back().end);
    return {ParentChunk{t, {t}}};
  }

  std::vector<std::string> sentence_texts;
  sentence_texts.reserve(sentences.size());
  for (const auto& sp : sentences) sentence_texts.push_back(slice(sp.begin, sp.end));
  auto vectors = embedder.embed_batch(sentence_texts);
  if (vectors.size() != sentences.size()) {
    throw Error(ErrorCode::embedder_unavailable, "embedder returned a wrong number of vectors");
  }
  std::vector<double> distances;
  distances.reserve(sentences.size() - 1);
  for (std::size_t i = 0; i + 1 < vectors.size(); ++i) distances.push_back(1.0 - cosine(vectors[i], vectors[i + 1]));
  const double threshold = percentile(distances, config.breakpoint_percentile);

  // Child groups as [first sentence, last sentence] ranges.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  std::size_t first = 0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] > threshold) {
      groups.emplace_back(first, i);
      first = i + 1;
    }
  }
  groups.emplace_back(first, sentences.size() - 1);

  std::vector<ParentChunk> parents;
  std::size_t parent_begin = 0;
  std::size_t parent_end = 0;
  std::vector<std::string> children;
  auto flush = [&] {
    if (children.empty()) return;
    parents.push_back({slice(parent_begin, parent_end), std::move(children)});
    children.clear();
  };
  for (const auto& [a, b] : groups) {
    std::size_t cb = sentences[a].begin;
    std::size_t ce = sentences[b].end;
    if (!children.empty() && ce - parent_begin > config.max_parent_chars) flush();
    if (children.empty()) parent_begin = cb;
    parent_end = ce;
    children.push_back(slice(cb, ce));
  }
  flush();
  return parents;
}

NodeStore build_chunk_graph(const ParsedPaper& paper, Embedder& embedder, const ChunkingConfig& config) {
  NodeStore store = build_section_nodes(paper);
  const auto& sections = paper.sections;
  std::vector<std::vector<ParentChunk>> splits(sections.size());
  std::vector<std::exception_ptr> errors(sections.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < sections.size(); i = next++) {
      try {
        splits[i] = semantic_split(sections[i].body, embedder, config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t workers = std::clamp<std::size_t>(config.embed_concurrency, 1, std::max<std::size_t>(1, sections.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t i = 0; i < sections.size(); ++i) {
    const NodeId section_id{static_cast<std::uint32_t>(i)};
    std::vector<NodeId> parent_chain;
    std::vector<NodeId> child_chain;
    for (auto& p : splits[i]) {
      ChunkNode parent;
      parent.kind = NodeKind::parent;
      parent.text = std::move(p.text);
      parent.section_name = sections[i].display_name;
      parent.parent = section_id;
      auto pid = store.add(std::move(parent));
      parent_chain.push_back(pid);
      for (auto& c : p.children) {
        ChunkNode child;
        child.kind = NodeKind::child;
        child.text = std::move(c);
        child.section_name = sections[i].display_name;
        child.parent = pid;
        child_chain.push_back(store.add(std::move(child)));
      }
    }
    store.link_chain(parent_chain);
    store.link_chain(child_chain);
  }
  return store;
}

std::set<NodeId> lineage(const NodeStore& store, const std::set<std::string>& section_names) {
  std::set<NodeId> out;
  for (const auto& name : section_names) {
    auto it = store.section_index().find(name);
    if (it == store.section_index().end()) throw Error(ErrorCode::unknown_section, "unknown section: " + name);
    out.insert(it->second.begin(), it->second.end());
  }
  return out;
}

void to_json(nlohmann::json& j, const ChunkNode& n) {
  auto opt = [](const std::optional<NodeId>& id) { return id ? nlohmann::json(id->value) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"id", n.id.value},
                     {"kind", to_string(n.kind)},
                     {"section_name", n.section_name},
                     {"text", n.text},
                     {"prev_id", opt(n.prev)},
                     {"next_id", opt(n.next)},
                     {"parent_id", opt(n.parent)}};
}

void to_json(nlohmann::json& j, const NodeStore& s) {
  nlohmann::json index = nlohmann::json::object();
  for (const auto& [name, ids] : s.section_index()) {
    auto& arr = index[name] = nlohmann::json::array();
    for (auto id : ids) arr.push_back(id.value);
  }
  j = nlohmann::json{{"sections", s.section_order()}, {"section_index", index}, {"nodes", s.nodes()}};
}

}  // namespace aclready
