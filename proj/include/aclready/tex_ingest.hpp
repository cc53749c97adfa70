#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aclready {

struct RawTexDocument {
  std::string bytes;
  std::string filename;
};

enum class SectionKind { abstract, numbered, appendix, unnumbered, excluded };

std::string_view to_string(SectionKind kind);

struct Section {
  // Ordinal among sections of the same kind: 1..n for numbered sections,
  // 1..m for appendices (rendered as letters), 0 otherwise.
  int index = 0;
  std::string display_name;
  std::string raw_title;
  std::string body;
  SectionKind kind = SectionKind::numbered;

  // "3", "B", or empty for the abstract and unnumbered sections.
  std::string ordinal() const;

  friend bool operator==(const Section&, const Section&) = default;
};

struct ParseReport {
  // Anything the parser could not handle faithfully: unresolved includes,
  // unknown or unbalanced environments, encoding repairs.
  std::vector<std::string> warnings;
  // Log of destructive but expected transformations.
  std::vector<std::string> notes;
  std::vector<std::string> dropped_sections;
};

struct ParsedPaper {
  std::vector<Section> sections;
  std::optional<std::string> title;
  ParseReport report;

  std::vector<std::string> display_names() const;
  const Section* find(std::string_view display_name) const;
};

struct IngestOptions {
  // Compared after title normalization (lowercase, punctuation dropped).
  std::vector<std::string> excluded_titles = default_excluded_titles();

  static std::vector<std::string> default_excluded_titles();
};

// Removes unescaped `%` comments and `comment` environments. Verbatim-like
// environments, `\verb` and `\url` arguments are copied untouched. Lines that
// held nothing but a comment disappear together with their newline.
std::string strip_comments(std::string_view text, ParseReport* report = nullptr);

// Cuts everything before the opening of the abstract. Throws
// Error(no_abstract_found) when neither an abstract environment nor an
// Abstract heading exists.
std::string strip_preamble(std::string_view text);

std::vector<Section> drop_excluded_sections(std::vector<Section> sections,
                                            const std::vector<std::string>& excluded_titles,
                                            ParseReport& report);

// Replaces figure/table floats by "Figure: <caption>" / "Table: <caption>"
// paragraphs and deletes tabular bodies anywhere in the text.
std::string reduce_floats_to_captions(std::string_view text, ParseReport& report);

ParsedPaper parse_tex(const RawTexDocument& doc, const IngestOptions& options = {});

// Re-emits a parsed paper as TeX that parses back to the same sections.
std::string render_tex(const ParsedPaper& paper);

std::optional<std::string> extract_title(std::string_view preamble);

void to_json(nlohmann::json& j, const Section& s);
void to_json(nlohmann::json& j, const ParseReport& r);
void to_json(nlohmann::json& j, const ParsedPaper& p);

}  // namespace aclready
