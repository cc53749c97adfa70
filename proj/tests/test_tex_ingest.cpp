#include "aclready/error.hpp"
#include "aclready/tex_ingest.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <regex>

using namespace aclready;
using aclready::testing::fixture;
using aclready::testing::fixture_path;

namespace {

const char* const kGoldenFixtures[] = {"minimal", "full_features", "emnlp_style", "checklist_app", "abstract_heading"};

ParsedPaper parse_fixture(const std::string& name) { return parse_tex({fixture(name + ".tex"), name + ".tex"}); }

// Oracle: '%' characters not escaped by an odd run of backslashes, ignoring
// verbatim environments and \verb spans.
std::size_t unescaped_percents(const std::string& s) {
  std::string t = std::regex_replace(s, std::regex(R"(\\begin\{verbatim\}[\s\S]*?\\end\{verbatim\})"), "");
  t = std::regex_replace(t, std::regex(R"(\\verb(.)[^\n]*?\1)"), "");
  std::size_t count = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != '%') continue;
    std::size_t slashes = 0;
    for (std::size_t j = i; j > 0 && t[j - 1] == '\\'; --j) ++slashes;
    if (slashes % 2 == 0) ++count;
  }
  return count;
}

// Oracle: comment count in the source, one per line holding an unescaped '%'.
std::size_t comment_lines(const std::string& s) {
  std::size_t count = 0;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) count += unescaped_percents(line) > 0 ? 1 : 0;
  return count;
}

std::size_t count_occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(TexGolden, FixturesMatchFrozenSectionLists) {
  for (const auto* name : kGoldenFixtures) {
    SCOPED_TRACE(name);
    auto parsed = parse_fixture(name);
    auto expected = nlohmann::json::parse(fixture(std::string(name) + ".sections.json"));
    EXPECT_EQ(nlohmann::json(parsed.sections), expected);
  }
}

TEST(TexGolden, BodiesCarryNoUnescapedPercent) {
  for (const auto* name : kGoldenFixtures) {
    SCOPED_TRACE(name);
    for (const auto& s : parse_fixture(name).sections) EXPECT_EQ(unescaped_percents(s.body), 0u) << s.display_name;
  }
}

TEST(TexComments, StripCountMatchesOracle) {
  auto src = fixture("full_features.tex");
  ParseReport report;
  auto stripped = strip_comments(src, &report);
  EXPECT_EQ(unescaped_percents(stripped), 0u);
  EXPECT_EQ(comment_lines(src), 12u);
  ASSERT_FALSE(report.notes.empty());
  EXPECT_EQ(report.notes.front(), "stripped " + std::to_string(comment_lines(src)) + " comment(s)");
  EXPECT_NE(stripped.find("40\\%"), std::string::npos);
}

TEST(TexComments, WholeLineCommentsVanishWithNewline) {
  EXPECT_EQ(strip_comments("a\n% gone\nb\n"), "a\nb\n");
  EXPECT_EQ(strip_comments("a % tail\nb"), "a\nb");
  EXPECT_EQ(strip_comments("50\\% kept"), "50\\% kept");
  EXPECT_EQ(strip_comments("\\\\% comment after a line break"), "\\\\");
}

TEST(TexComments, VerbatimAndUrlsAreProtected) {
  EXPECT_EQ(strip_comments("\\verb|50%| x"), "\\verb|50%| x");
  EXPECT_EQ(strip_comments("\\url{http://a.b/%20c} x"), "\\url{http://a.b/%20c} x");
  const std::string verb = "\\begin{verbatim}\n100% literal\n\\end{verbatim}\n";
  EXPECT_EQ(strip_comments(verb), verb);
  EXPECT_EQ(strip_comments("a\n\\begin{comment}\nhidden\n\\end{comment}\nb"), "a\nb");
}

TEST(TexPreamble, CutsAtHandMarkedAbstractOffset) {
  auto src = fixture("emnlp_style.tex");
  ASSERT_EQ(src.substr(500, 16), "\\begin{abstract}");
  EXPECT_EQ(strip_preamble(src), src.substr(500));
}

TEST(TexPreamble, MissingAbstractRaises) {
  try {
    parse_fixture("no_abstract");
    FAIL() << "expected NoAbstractFound";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_abstract_found);
  }
}

TEST(TexPreamble, AbstractHeadingIsAccepted) {
  auto p = parse_fixture("abstract_heading");
  ASSERT_FALSE(p.sections.empty());
  EXPECT_EQ(p.sections.front().kind, SectionKind::abstract);
  EXPECT_EQ(p.sections.front().display_name, "Abstract");
}

TEST(TexDocument, EmptyInputRaises) {
  try {
    parse_tex({"", "empty.tex"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_document);
  }
}

TEST(TexSections, AcknowledgmentsAndReferencesDropped) {
  auto p = parse_fixture("full_features");
  EXPECT_EQ(p.find("Acknowledgments"), nullptr);
  ASSERT_EQ(p.report.dropped_sections.size(), 1u);
  EXPECT_EQ(p.report.dropped_sections[0], "Acknowledgments");
  for (const auto& s : p.sections) EXPECT_EQ(s.body.find("annotators for their patience"), std::string::npos);

  auto h = parse_fixture("abstract_heading");
  ASSERT_NE(h.find("3 Discussion"), nullptr);  // dropped ACKNOWLEDGMENTS leaves no numbering gap
  EXPECT_NE(std::find(h.report.dropped_sections.begin(), h.report.dropped_sections.end(), "References"),
            h.report.dropped_sections.end());
}

TEST(TexSections, NumberingAppendixAndUnnumbered) {
  auto p = parse_fixture("full_features");
  std::vector<std::string> names = p.display_names();
  std::vector<std::string> expected = {"Abstract",    "1 Introduction",    "2 Method",
                                       "3 Experiments", "Limitations", "A Hyperparameters",
                                       "B Annotation Guidelines"};
  EXPECT_EQ(names, expected);
  EXPECT_EQ(p.sections[5].ordinal(), "A");
  EXPECT_EQ(p.sections[2].ordinal(), "2");
  EXPECT_EQ(p.sections[4].ordinal(), "");
  EXPECT_EQ(p.title.value_or(""), "Robust Widget Tagging with Sparse Supervision");
}

TEST(TexFloats, OnlyCaptionsSurvive) {
  auto src = fixture("full_features.tex");
  auto p = parse_fixture("full_features");
  std::string all;
  for (const auto& s : p.sections) all += s.body + "\n\n";
  // Oracle: captions in the comment-free source.
  auto captions = count_occurrences(strip_comments(src), "\\caption{");
  EXPECT_EQ(captions, 5u);
  EXPECT_EQ(count_occurrences(all, "Figure: ") + count_occurrences(all, "Table: "), captions);
  EXPECT_EQ(all.find("includegraphics"), std::string::npos);
  EXPECT_EQ(all.find("tabular"), std::string::npos);
  EXPECT_EQ(all.find("9000"), std::string::npos);
  EXPECT_EQ(all.find("91.2"), std::string::npos);
  EXPECT_EQ(all.find("\\label"), std::string::npos);
}

TEST(TexFloats, ReduceKeepsKindAndCaption) {
  ParseReport r;
  auto out = reduce_floats_to_captions("x\n\\begin{table}[h]\\begin{tabular}{l}a\\end{tabular}"
                                       "\\caption{Stats.\\label{t}}\\end{table}\ny",
                                       r);
  EXPECT_NE(out.find("Table: Stats."), std::string::npos);
  EXPECT_EQ(out.find("tabular"), std::string::npos);
}

TEST(TexIncludes, UnresolvedInputIsWarned) {
  auto p = parse_fixture("full_features");
  ASSERT_EQ(p.report.warnings.size(), 1u);
  EXPECT_EQ(p.report.warnings[0], "unresolved include: method_details");
}

TEST(TexRoundTrip, ParseRenderParseIsIdempotent) {
  for (const auto* name : {"minimal", "full_features", "emnlp_style", "checklist_app", "abstract_heading", "ten_page"}) {
    SCOPED_TRACE(name);
    auto first = parse_fixture(name);
    auto second = parse_tex({render_tex(first), "rendered.tex"});
    EXPECT_EQ(first.sections, second.sections);
  }
}

TEST(TexEncoding, InvalidUtf8IsRepairedAndWarned) {
  std::string src = "\\begin{abstract}caf\xE9 bar\\end{abstract}\n\\section{Intro}\nText.";
  auto p = parse_tex({src, "latin1.tex"});
  EXPECT_NE(p.sections[0].body.find("caf\xEF\xBF\xBD"), std::string::npos);
  EXPECT_FALSE(p.report.warnings.empty());
}

TEST(TexJson, SectionSerialization) {
  auto p = parse_fixture("minimal");
  auto j = nlohmann::json(p);
  EXPECT_TRUE(j.contains("sections"));
  EXPECT_TRUE(j.contains("report"));
  EXPECT_EQ(j["sections"][0]["kind"], "abstract");
}
