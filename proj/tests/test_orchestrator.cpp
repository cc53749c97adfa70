#include "aclready/embedding_index.hpp"
#include "aclready/error.hpp"
#include "aclready/orchestrator.hpp"
#include "adversarial_corpus.hpp"
#include "fake_transport.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>
#include <regex>
#include <set>

using namespace aclready;
using aclready::testing::FakeTransport;
using aclready::testing::RecordedPost;

namespace {

const QuestionBank& bank() {
  static const QuestionBank b = load_question_bank(default_question_bank_path());
  return b;
}

const auto& kSections = aclready::testing::kCorpusSections;

struct Pipeline {
  ParsedPaper paper;
  NodeStore store;
  std::shared_ptr<StubEmbedder> embedder = std::make_shared<StubEmbedder>();
  std::optional<EmbeddingIndex> index;
  ModelConfig config;

  explicit Pipeline(const std::string& name) {
    paper = parse_tex({aclready::testing::fixture(name), name});
    store = build_chunk_graph(paper, *embedder);
    index = EmbeddingIndex::build(store, embedder);
    config.retry = aclready::testing::fast_retries();
  }

  AnswerContext context(ChatProvider& provider) {
    return AnswerContext{bank(), paper, store, *index, provider, config, 5};
  }
};

// Independent packing arithmetic: greedy left-to-right with a separator
// between items, then recurse on the answers.
std::size_t oracle_calls(std::vector<std::size_t> lengths, std::size_t budget, std::size_t sep, std::size_t answer) {
  std::size_t batches = 0;
  std::size_t used = 0;
  bool open = false;
  for (auto len : lengths) {
    if (open && used + sep + len <= budget) {
      used += sep + len;
    } else {
      ++batches;
      used = len;
      open = true;
    }
  }
  if (batches <= 1) return 1;
  return batches + oracle_calls(std::vector<std::size_t>(batches, answer), budget, sep, answer);
}

const std::string kShortAnswer = R"({"answer":"no","section name":"None","justification":"n"})";

struct CallCountCase {
  std::size_t contexts;
  double fraction;
};

std::size_t tree_calls(const CallCountCase& c, std::size_t* oracle) {
  auto q = *bank().find("A1");
  ParsedPaper paper;
  Section s;
  s.kind = SectionKind::abstract;
  s.display_name = "Abstract";
  s.raw_title = "Abstract";
  s.body = "x";
  paper.sections.push_back(s);
  auto prompt = render_prompt(bank(), q, paper);
  ModelConfig cfg;
  cfg.max_context_chars = prompt.head.size() + prompt.tail.size() + 10000;
  const std::size_t window = 10000;
  auto len = static_cast<std::size_t>(c.fraction * window);
  std::vector<std::string> ctx(c.contexts, std::string(len, 'a'));
  auto inner = std::make_shared<FunctionChatProvider>([](const ChatRequest&) { return kShortAnswer; });
  RecordingChatProvider rec(inner);
  tree_summarize(rec, cfg, prompt, ctx);
  *oracle = oracle_calls(std::vector<std::size_t>(c.contexts, len), window, kContextSeparator.size(), kShortAnswer.size());
  for (const auto& r : rec.requests()) EXPECT_LE(r.prompt.size(), cfg.max_context_chars);
  return rec.call_count();
}

}  // namespace

TEST(ChatComplete, StubReplyReturnedVerbatim) {
  ModelConfig cfg;
  FunctionChatProvider echo([](const ChatRequest&) { return std::string(R"({"answer": "yes"})"); });
  EXPECT_EQ(chat_complete(echo, cfg, "prompt"), R"({"answer": "yes"})");
}

TEST(ChatComplete, RequestCarriesZeroTemperature) {
  auto transport = std::make_shared<FakeTransport>([](const RecordedPost&) {
    return HttpResult{200, R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})"};
  });
  ModelConfig cfg;
  cfg.provider_base_url = "http://localhost:9/v1";
  OpenAiChatProvider provider(cfg, transport);
  EXPECT_EQ(chat_complete(provider, cfg, "the prompt"), "hello");
  auto log = transport->log();
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].url, "http://localhost:9/v1/chat/completions");
  EXPECT_EQ(log[0].body["temperature"].get<double>(), 0.0);
  EXPECT_EQ(log[0].body["model"], "gpt-3.5-turbo-0613");
  EXPECT_EQ(log[0].body["messages"][0]["role"], "user");
  EXPECT_EQ(log[0].body["messages"][0]["content"], "the prompt");
}

TEST(ChatComplete, OverflowRaisesWithoutCalling) {
  ModelConfig cfg;
  cfg.max_context_chars = 10;
  auto inner = std::make_shared<StubChatProvider>();
  RecordingChatProvider rec(inner);
  try {
    chat_complete(rec, cfg, std::string(11, 'x'));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::context_overflow);
  }
  EXPECT_EQ(rec.call_count(), 0u);
}

TEST(ChatComplete, TransientErrorsRetriedPermanentSurface) {
  int calls = 0;
  auto transport = std::make_shared<FakeTransport>([&](const RecordedPost&) {
    return ++calls < 3 ? HttpResult{429, "slow down"}
                       : HttpResult{200, R"({"choices":[{"message":{"content":"ok"}}]})"};
  });
  ModelConfig cfg;
  cfg.retry = aclready::testing::fast_retries();
  OpenAiChatProvider provider(cfg, transport);
  EXPECT_EQ(chat_complete(provider, cfg, "p"), "ok");
  EXPECT_EQ(calls, 3);

  auto denied = std::make_shared<FakeTransport>([](const RecordedPost&) { return HttpResult{400, "bad"}; });
  OpenAiChatProvider rejecting(cfg, denied);
  try {
    chat_complete(rejecting, cfg, "p");
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.status(), 400);
    EXPECT_FALSE(e.transient());
  }
  EXPECT_EQ(denied->log().size(), 1u);
}

TEST(TreeSummarize, CallCountsFollowPackingArithmetic) {
  std::size_t oracle = 0;
  // One short context: a single call.
  EXPECT_EQ(tree_calls({1, 0.01}, &oracle), 1u);
  EXPECT_EQ(oracle, 1u);
  // Four contexts of 0.4 window: two per batch, two leaves plus a combine.
  EXPECT_EQ(tree_calls({4, 0.4}, &oracle), 3u);
  EXPECT_EQ(oracle, 3u);
  // Ten contexts of 0.4 window: five leaves plus a combine.
  EXPECT_EQ(tree_calls({10, 0.4}, &oracle), 6u);
  EXPECT_EQ(oracle, 6u);
  // Three contexts of 0.3 window fit together.
  EXPECT_EQ(tree_calls({3, 0.3}, &oracle), 1u);
  EXPECT_EQ(oracle, 1u);
}

TEST(TreeSummarize, PackingNeverExceedsWindow) {
  auto q = *bank().find("C1");
  ParsedPaper paper;
  Section s;
  s.kind = SectionKind::abstract;
  s.display_name = "Abstract";
  paper.sections.push_back(s);
  auto prompt = render_prompt(bank(), q, paper);
  const std::size_t budget = 500;
  auto max_chars = prompt.head.size() + prompt.tail.size() + budget;
  std::mt19937 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> ctx;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 12); i < n; ++i) ctx.emplace_back(1 + rng() % 700, 'z');
    for (const auto& batch : pack_contexts(prompt, ctx, max_chars)) {
      EXPECT_LE(prompt.compose(batch).size(), max_chars);
    }
  }
}

TEST(TreeSummarize, OrderInsensitiveStubIgnoresBatchBoundaries) {
  // Answers with the sorted set of ctxN markers it sees.
  FunctionChatProvider sets([](const ChatRequest& r) {
    std::set<int> ids;
    static const std::regex marker(R"(ctx(\d+))");
    for (std::sregex_iterator it(r.prompt.begin(), r.prompt.end(), marker), end; it != end; ++it) {
      ids.insert(std::stoi((*it)[1]));
    }
    std::string out;
    for (int id : ids) out += "ctx" + std::to_string(id) + " ";
    return out;
  });
  auto q = *bank().find("A2");
  ParsedPaper paper;
  Section s;
  s.kind = SectionKind::abstract;
  s.display_name = "Abstract";
  paper.sections.push_back(s);
  auto prompt = render_prompt(bank(), q, paper);
  std::vector<std::string> ctx;
  for (int i = 0; i < 9; ++i) ctx.push_back("ctx" + std::to_string(i) + " " + std::string(150, 'w'));
  std::set<std::string> finals;
  for (std::size_t budget : {400u, 520u, 700u, 2000u}) {
    ModelConfig cfg;
    cfg.max_context_chars = prompt.head.size() + prompt.tail.size() + budget;
    finals.insert(tree_summarize(sets, cfg, prompt, ctx));
  }
  EXPECT_EQ(finals.size(), 1u);
  EXPECT_EQ(*finals.begin(), "ctx0 ctx1 ctx2 ctx3 ctx4 ctx5 ctx6 ctx7 ctx8 ");
}

TEST(ParseAnswer, BareObject) {
  auto a = parse_answer(R"({"answer":"yes","section name":"3 Method","justification":"Described in detail."})",
                        kSections);
  EXPECT_EQ(a.verdict, Verdict::yes);
  EXPECT_EQ(a.section_name.value_or(""), "3 Method");
  EXPECT_FALSE(a.needs_review);
}

TEST(ParseAnswer, CodeFenceWrapperSameAsBare) {
  std::string bare = R"({"answer":"yes","section name":"3 Method","justification":"Described."})";
  auto a = parse_answer(bare, kSections);
  auto b = parse_answer("Sure! ```json\n" + bare + "\n```", kSections);
  EXPECT_EQ(a.verdict, b.verdict);
  EXPECT_EQ(a.section_name, b.section_name);
  EXPECT_EQ(a.justification, b.justification);
}

TEST(ParseAnswer, UnknownSectionNeedsReview) {
  auto a = parse_answer(R"({"answer":"yes","section name":"Methodology","justification":"x"})", kSections);
  EXPECT_EQ(a.verdict, Verdict::yes);
  EXPECT_FALSE(a.section_name);
  EXPECT_TRUE(a.needs_review);
  EXPECT_EQ(a.raw_section_name, "Methodology");
}

TEST(ParseAnswer, SectionNormalization) {
  EXPECT_EQ(resolve_section_name("section 3", kSections).value_or(""), "3 Method");
  EXPECT_EQ(resolve_section_name("METHOD", kSections).value_or(""), "3 Method");
  EXPECT_EQ(resolve_section_name("3. Method", kSections).value_or(""), "3 Method");
  EXPECT_EQ(resolve_section_name("Appendix A", kSections).value_or(""), "A Appendix");
  EXPECT_EQ(resolve_section_name("related work", kSections).value_or(""), "2 Related Work");
  EXPECT_FALSE(resolve_section_name("Methods", kSections));
  EXPECT_FALSE(resolve_section_name("7", kSections));
  EXPECT_EQ(normalize_section_name("Section 3: Method"), "method");
}

using aclready::testing::AdversarialCase;
using aclready::testing::Expect;
using aclready::testing::kCorpus;

TEST(ParseAnswer, AdversarialCorpus) {
  ASSERT_EQ(std::size(kCorpus), 20u);
  std::size_t parsed = 0;
  for (std::size_t i = 0; i < std::size(kCorpus); ++i) {
    const auto& c = kCorpus[i];
    SCOPED_TRACE("case " + std::to_string(i));
    std::optional<LlmAnswer> a;
    try {
      a = parse_answer(c.raw, kSections);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::unparseable_response);
    }
    if (c.expect == Expect::unparseable) {
      EXPECT_FALSE(a);
      continue;
    }
    ASSERT_TRUE(a);
    ++parsed;
    switch (c.expect) {
      case Expect::yes:
        EXPECT_EQ(a->verdict, Verdict::yes);
        EXPECT_EQ(a->section_name.value_or("<none>"), c.section);
        EXPECT_FALSE(a->needs_review) << a->review_reason;
        break;
      case Expect::no:
        EXPECT_EQ(a->verdict, Verdict::no);
        EXPECT_FALSE(a->justification.empty());
        EXPECT_FALSE(a->needs_review) << a->review_reason;
        break;
      case Expect::review:
        EXPECT_TRUE(a->needs_review);
        EXPECT_FALSE(a->review_reason.empty());
        break;
      case Expect::unparseable: break;
    }
  }
  EXPECT_EQ(parsed, 18u);
}

TEST(ParseAnswer, SanitizedGarbageNeverCrashes) {
  std::mt19937 rng(11);
  const std::string alphabet = "{}[]\"',:\\ abcyesno\n`";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (int k = 0, n = static_cast<int>(rng() % 60); k < n; ++k) s.push_back(alphabet[rng() % alphabet.size()]);
    try {
      parse_answer(s, kSections);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::unparseable_response);
    }
  }
}

TEST(AnswerQuestion, SectionFilterRestrictsA3Context) {
  Pipeline p("checklist_app.tex");
  auto inner = std::make_shared<StubChatProvider>();
  RecordingChatProvider rec(inner);
  auto ctx = p.context(rec);
  auto outcome = answer_question(*bank().find("A3"), ctx);
  ASSERT_TRUE(std::holds_alternative<LlmAnswer>(outcome));
  auto requests = rec.requests();
  ASSERT_FALSE(requests.empty());
  static const std::regex label(R"(Section: ([^\n]+)\n)");
  std::size_t labels = 0;
  for (const auto& r : requests) {
    for (std::sregex_iterator it(r.prompt.begin(), r.prompt.end(), label), end; it != end; ++it, ++labels) {
      auto name = (*it)[1].str();
      EXPECT_TRUE(name == "Abstract" || name == "1 Introduction") << name;
    }
  }
  EXPECT_GT(labels, 0u);
}

TEST(AnswerQuestion, RecordsProvenance) {
  Pipeline p("checklist_app.tex");
  StubChatProvider stub;
  auto outcome = answer_question(*bank().find("A1"), p.context(stub));
  const auto& a = std::get<LlmAnswer>(outcome);
  EXPECT_EQ(a.qid, "A1");
  EXPECT_EQ(a.model_id, "gpt-3.5-turbo-0613");
  EXPECT_NE(a.prompt.find("### Question\nA1. "), std::string::npos);
  EXPECT_GE(a.elapsed_ms, 0);
}

TEST(AnswerAll, NoEverywhereGivesEighteenJustifiedNos) {
  Pipeline p("checklist_app.tex");
  FunctionChatProvider no([](const ChatRequest&) {
    return std::string(R"({"answer":"no","section name":"None","justification":"Not addressed in the paper."})");
  });
  auto outcomes = answer_all(p.context(no));
  ASSERT_EQ(outcomes.size(), 18u);
  for (const auto& o : outcomes) {
    const auto& a = std::get<LlmAnswer>(o);
    EXPECT_EQ(a.verdict, Verdict::no);
    EXPECT_FALSE(a.justification.empty());
    EXPECT_FALSE(a.needs_review);
  }
}

TEST(AnswerAll, OneFailureLeavesOtherSeventeenIntact) {
  Pipeline p("checklist_app.tex");
  StubChatProvider stub;
  auto baseline = answer_all(p.context(stub));
  FunctionChatProvider flaky([&](const ChatRequest& r) -> std::string {
    if (r.prompt.find("### Question\nB2. ") != std::string::npos) throw ProviderError(400, "rejected", false);
    return stub.complete(r);
  });
  std::vector<std::string> started;
  auto outcomes = answer_all(p.context(flaky), [&](const ChecklistQuestion& q) { started.push_back(q.qid); });
  ASSERT_EQ(outcomes.size(), 18u);
  EXPECT_EQ(started.size(), 18u);
  EXPECT_TRUE(std::is_sorted(started.begin(), started.end()));
  std::size_t failures = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (const auto* f = std::get_if<QuestionFailure>(&outcomes[i])) {
      ++failures;
      EXPECT_EQ(f->qid, "B2");
      EXPECT_EQ(f->code, ErrorCode::provider_error);
      continue;
    }
    const auto& a = std::get<LlmAnswer>(outcomes[i]);
    const auto& b = std::get<LlmAnswer>(baseline[i]);
    EXPECT_EQ(a.raw_response, b.raw_response) << a.qid;
    EXPECT_EQ(a.prompt, b.prompt) << a.qid;
  }
  EXPECT_EQ(failures, 1u);
}

TEST(AnswerAll, DeterministicUnderStub) {
  Pipeline p("ten_page.tex");
  StubChatProvider stub;
  auto dump = [](const std::vector<QuestionOutcome>& outs) {
    std::string s;
    for (const auto& o : outs) {
      const auto& a = std::get<LlmAnswer>(o);
      s += a.qid + "|" + a.raw_response + "|" + a.prompt + "\n";
    }
    return s;
  };
  auto first = dump(answer_all(p.context(stub)));
  auto second = dump(answer_all(p.context(stub)));
  EXPECT_EQ(first, second);
  auto ctx = p.context(stub);
  ctx.parallel_questions = true;
  EXPECT_EQ(dump(answer_all(ctx)), first);
}

TEST(AnswerQuestion, OneRepairPromptThenNeedsReview) {
  Pipeline p("checklist_app.tex");
  int calls = 0;
  FunctionChatProvider recovers([&](const ChatRequest& r) -> std::string {
    ++calls;
    if (r.prompt.find("could not be parsed") != std::string::npos) {
      return R"({"answer":"yes","section name":"Limitations","justification":"Listed."})";
    }
    return "I think the answer is probably yes.";
  });
  auto a = std::get<LlmAnswer>(answer_question(*bank().find("A1"), p.context(recovers)));
  EXPECT_EQ(a.verdict, Verdict::yes);
  EXPECT_EQ(a.section_name.value_or(""), "Limitations");
  EXPECT_NE(a.prompt.find("Respond with only the JSON object"), std::string::npos);
  EXPECT_EQ(calls, 2);

  calls = 0;
  FunctionChatProvider hopeless([&](const ChatRequest&) {
    ++calls;
    return std::string("no idea");
  });
  auto b = std::get<LlmAnswer>(answer_question(*bank().find("A1"), p.context(hopeless)));
  EXPECT_TRUE(b.needs_review);
  EXPECT_EQ(b.verdict, Verdict::unknown);
  EXPECT_EQ(calls, 2);
}

TEST(AnswerQuestion, ContextOverflowBecomesFailure) {
  Pipeline p("checklist_app.tex");
  p.config.max_context_chars = 50;
  StubChatProvider stub;
  auto outcome = answer_question(*bank().find("A1"), p.context(stub));
  ASSERT_TRUE(std::holds_alternative<QuestionFailure>(outcome));
  EXPECT_EQ(std::get<QuestionFailure>(outcome).code, ErrorCode::context_overflow);
}

TEST(Verdicts, Normalization) {
  EXPECT_EQ(verdict_from_string("YES"), Verdict::yes);
  EXPECT_EQ(verdict_from_string(" yes. "), Verdict::yes);
  EXPECT_EQ(verdict_from_string("No"), Verdict::no);
  EXPECT_EQ(verdict_from_string("Not applicable"), Verdict::not_applicable);
  EXPECT_EQ(verdict_from_string("maybe"), Verdict::unknown);
  EXPECT_EQ(to_string(Verdict::not_applicable), "n/a");
}
