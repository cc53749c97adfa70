#include "aclready/chunk_graph.hpp"
#include "aclready/error.hpp"
#include "chunk_props.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <regex>

using namespace aclready;
using aclready::testing::chunk_graph_violations;
using aclready::testing::random_paper;

namespace {

// Sentences tagged "[Tk]" map to basis vector e_k, so adjacent distance is 0
// within a topic and 1 across topics.
class TaggedEmbedder final : public Embedder {
 public:
  std::string model_id() const override { return "tagged"; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    static const std::regex tag(R"(\[T(\d)\])");
    for (const auto& t : texts) {
      std::vector<double> v(10, 0.0);
      std::smatch m;
      v[std::regex_search(t, m, tag) ? std::stoi(m[1]) : 9] = 1.0;
      out.push_back({v, model_id()});
    }
    return out;
  }
};

std::vector<std::string> texts_of(const std::vector<ParentChunk>& parents) {
  std::vector<std::string> out;
  for (const auto& p : parents)
    for (const auto& c : p.children) out.push_back(c);
  return out;
}

}  // namespace

TEST(Sentences, SplitsOnTerminalPunctuationAndParagraphs) {
  std::string s = "First one. Second one? Third!\n\nNew paragraph without stop\n\nLast.";
  auto spans = split_sentences(s);
  std::vector<std::string> got;
  for (auto sp : spans) got.push_back(s.substr(sp.begin, sp.end - sp.begin));
  std::vector<std::string> expected = {"First one.", "Second one?", "Third!", "New paragraph without stop", "Last."};
  EXPECT_EQ(got, expected);
}

TEST(Sentences, AbbreviationsAndInitialsDoNotSplit) {
  std::string s = "See Fig. 3 and e.g. Table 2. Work by J. Smith et al. Was cited. Values were 3.5 on avg. and more.";
  auto spans = split_sentences(s);
  std::vector<std::string> got;
  for (auto sp : spans) got.push_back(s.substr(sp.begin, sp.end - sp.begin));
  std::vector<std::string> expected = {"See Fig. 3 and e.g. Table 2.", "Work by J. Smith et al. Was cited.",
                                       "Values were 3.5 on avg. and more."};
  EXPECT_EQ(got, expected);
}

TEST(Percentile, MatchesLinearInterpolation) {
  // Reference values computed by hand with the (n-1)p rank rule.
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 95), 3.85);
  EXPECT_DOUBLE_EQ(percentile({3, 1, 2}, 50), 2.0);
  EXPECT_DOUBLE_EQ(percentile({5}, 95), 5.0);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 25), 2.5);
  EXPECT_DOUBLE_EQ(percentile({}, 50), 0.0);
}

TEST(SemanticSplit, BreaksExactlyAtTopicShifts) {
  std::string body = "[T1] a one. [T1] a two. [T1] a three. [T2] b one. [T2] b two. [T3] c one.";
  TaggedEmbedder e;
  ChunkingConfig cfg;
  cfg.breakpoint_percentile = 50;  // distances 0,0,1,0,1 -> threshold 0
  auto parents = semantic_split(body, e, cfg);
  std::vector<std::string> expected = {"[T1] a one. [T1] a two. [T1] a three.", "[T2] b one. [T2] b two.",
                                       "[T3] c one."};
  EXPECT_EQ(texts_of(parents), expected);
  ASSERT_EQ(parents.size(), 1u);  // all fit one parent
  EXPECT_EQ(parents[0].text, body);
}

TEST(SemanticSplit, ParentsRespectMaxChars) {
  std::string body = "[T1] ab. [T2] bc. [T2] cd. [T3] de. [T3] ef.";
  TaggedEmbedder e;
  ChunkingConfig cfg;
  cfg.breakpoint_percentile = 0;  // distances 1,0,1,0 -> threshold 0
  cfg.max_parent_chars = 26;
  auto parents = semantic_split(body, e, cfg);
  ASSERT_EQ(parents.size(), 2u);
  EXPECT_EQ(parents[0].text, "[T1] ab. [T2] bc. [T2] cd.");
  EXPECT_EQ(parents[1].text, "[T3] de. [T3] ef.");
  EXPECT_EQ(parents[0].children.size(), 2u);
  EXPECT_EQ(parents[1].children.size(), 1u);
}

TEST(SemanticSplit, SingleSentenceIsOneChild) {
  StubEmbedder e;
  auto parents = semantic_split("  Only one sentence here  ", e);
  ASSERT_EQ(parents.size(), 1u);
  EXPECT_EQ(parents[0].text, "Only one sentence here");
  EXPECT_EQ(parents[0].children, std::vector<std::string>{"Only one sentence here"});
  EXPECT_TRUE(semantic_split("   ", e).empty());
}

TEST(ChunkGraph, SectionNodesChainedInOrder) {
  auto paper = parse_tex({aclready::testing::fixture("full_features.tex"), "f.tex"});
  StubEmbedder e;
  auto store = build_chunk_graph(paper, e);
  auto sections = store.ids_of_kind(NodeKind::section);
  ASSERT_EQ(sections.size(), paper.sections.size());
  for (std::size_t i = 0; i < sections.size(); ++i) {
    EXPECT_EQ(sections[i].value, i);
    EXPECT_EQ(store.at(sections[i]).section_name, paper.sections[i].display_name);
  }
  EXPECT_FALSE(store.at(sections.front()).prev);
  EXPECT_FALSE(store.at(sections.back()).next);
  EXPECT_EQ(store.section_order(), paper.display_names());
}

TEST(ChunkGraph, RandomPapersSatisfyInvariants) {
  std::mt19937_64 rng(1234);
  StubEmbedder e;
  ChunkingConfig cfg;
  cfg.max_parent_chars = 400;
  for (int i = 0; i < 200; ++i) {
    auto paper = random_paper(rng);
    auto store = build_chunk_graph(paper, e, cfg);
    auto bad = chunk_graph_violations(paper, store, cfg);
    ASSERT_TRUE(bad.empty()) << "paper " << i << ": " << bad.front();
  }
}

TEST(ChunkGraph, ConcurrencyDoesNotChangeTheGraph) {
  std::mt19937_64 rng(99);
  StubEmbedder e;
  for (int i = 0; i < 10; ++i) {
    auto paper = random_paper(rng);
    ChunkingConfig one;
    one.embed_concurrency = 1;
    ChunkingConfig four;
    four.embed_concurrency = 4;
    EXPECT_EQ(build_chunk_graph(paper, e, one), build_chunk_graph(paper, e, four));
  }
}

TEST(ChunkGraph, EmbedderFailurePropagates) {
  class Broken final : public Embedder {
   public:
    std::string model_id() const override { return "broken"; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string>) override {
      throw Error(ErrorCode::embedder_unavailable, "down");
    }
  } broken;
  auto paper = parse_tex({aclready::testing::fixture("minimal.tex"), "m.tex"});
  try {
    build_chunk_graph(paper, broken);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::embedder_unavailable);
  }
}

TEST(Lineage, CoversOwnedNodesAndRejectsUnknown) {
  auto paper = parse_tex({aclready::testing::fixture("checklist_app.tex"), "c.tex"});
  StubEmbedder e;
  auto store = build_chunk_graph(paper, e);
  auto ids = lineage(store, {"Abstract", "1 Introduction"});
  for (const auto& n : store.nodes()) {
    bool owned = n.section_name == "Abstract" || n.section_name == "1 Introduction";
    EXPECT_EQ(ids.count(n.id) > 0, owned) << n.id.value;
  }
  try {
    lineage(store, {"9 Nowhere"});
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::unknown_section);
  }
}

TEST(ChunkGraph, JsonDumpHasLinks) {
  auto paper = parse_tex({aclready::testing::fixture("minimal.tex"), "m.tex"});
  StubEmbedder e;
  auto j = nlohmann::json(build_chunk_graph(paper, e));
  ASSERT_TRUE(j["nodes"].is_array());
  EXPECT_EQ(j["nodes"][0]["kind"], "section");
  EXPECT_TRUE(j["nodes"][0]["prev_id"].is_null());
  EXPECT_TRUE(j["nodes"][0].contains("parent_id"));
}
