#include "aclready/tex_ingest.hpp"

#include "aclready/error.hpp"
#include "aclready/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace aclready {

namespace {

constexpr std::array<std::string_view, 5> kVerbatimEnvs = {"verbatim", "verbatim*", "Verbatim",
                                                           "lstlisting", "minted"};
constexpr std::array<std::string_view, 8> kFloatEnvs = {
    "figure", "figure*", "table", "table*", "wrapfigure", "wraptable", "sidewaysfigure", "sidewaystable"};
constexpr std::array<std::string_view, 6> kTabularEnvs = {"tabular", "tabular*", "tabularx",
                                                          "tabulary", "longtable", "longtable*"};
// Layout-only commands, with and without a single argument.
constexpr std::array<std::string_view, 5> kDroppedWithArg = {"label", "bibliography", "bibliographystyle",
                                                             "vspace", "hspace"};
constexpr std::array<std::string_view, 7> kDroppedNoArg = {"maketitle", "centering", "newpage", "clearpage",
                                                           "FloatBarrier", "balance", "vfill"};

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view name) {
  return std::find(set.begin(), set.end(), name) != set.end();
}

bool starts_at(std::string_view s, std::size_t pos, std::string_view prefix) {
  return s.size() >= pos + prefix.size() && s.compare(pos, prefix.size(), prefix) == 0;
}

// Reads a balanced {...} group starting at `open` (which must point at '{').
// Returns the content and sets `end` one past the closing brace. Returns
// nullopt when the group never closes.
std::optional<std::string> read_group(std::string_view s, std::size_t open, std::size_t& end) {
  if (open >= s.size() || s[open] != '{') return std::nullopt;
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\\') {
      ++i;
      continue;
    }
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) {
      end = i + 1;
      return std::string(s.substr(open + 1, i - open - 1));
    }
  }
  return std::nullopt;
}

std::size_t skip_spaces(std::string_view s, std::size_t pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' || s[pos] == '\r')) ++pos;
  return pos;
}

// Skips an optional [...] argument.
std::size_t skip_optional(std::string_view s, std::size_t pos) {
  std::size_t p = skip_spaces(s, pos);
  if (p < s.size() && s[p] == '[') {
    int depth = 0;
    for (std::size_t i = p; i < s.size(); ++i) {
      if (s[i] == '[') ++depth;
      if (s[i] == ']' && --depth == 0) return i + 1;
    }
  }
  return pos;
}

std::string command_name_at(std::string_view s, std::size_t backslash) {
  std::size_t i = backslash + 1;
  while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
  return std::string(s.substr(backslash + 1, i - backslash - 1));
}

// Finds the `\end{name}` matching a `\begin{name}` whose group ends at
// `after_begin`. Returns npos when unbalanced; `end_after` is set one past
// the closing `\end{name}`.
std::size_t find_env_end(std::string_view s, std::string_view name, std::size_t after_begin,
                         std::size_t& end_after) {
  const std::string open = "\\begin{" + std::string(name) + "}";
  const std::string close = "\\end{" + std::string(name) + "}";
  int depth = 1;
  std::size_t pos = after_begin;
  while (true) {
    auto next_open = s.find(open, pos);
    auto next_close = s.find(close, pos);
    if (next_close == std::string_view::npos) return std::string_view::npos;
    if (next_open != std::string_view::npos && next_open < next_close) {
      ++depth;
      pos = next_open + open.size();
      continue;
    }
    if (--depth == 0) {
      end_after = next_close + close.size();
      return next_close;
    }
    pos = next_close + close.size();
  }
}

std::string letter_ordinal(int index) {
  std::string out;
  int n = index;
  while (n > 0) {
    --n;
    out.insert(out.begin(), static_cast<char>('A' + n % 26));
    n /= 26;
  }
  return out;
}

std::string remove_label_commands(std::string_view s) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = s.find("\\label{", pos);
    if (hit == std::string_view::npos) break;
    std::size_t end = 0;
    if (!read_group(s, hit + 6, end)) break;
    out.append(s.substr(pos, hit - pos));
    pos = end;
  }
  out.append(s.substr(pos));
  return out;
}

std::vector<std::string> extract_captions(std::string_view inner) {
  std::vector<std::string> captions;
  std::size_t pos = 0;
  while ((pos = inner.find("\\caption", pos)) != std::string_view::npos) {
    std::size_t p = pos + 8;
    if (p < inner.size() && std::isalpha(static_cast<unsigned char>(inner[p]))) {
      // \captionof, \captionsetup, ...
      pos = p;
      continue;
    }
    if (p < inner.size() && inner[p] == '*') ++p;
    p = skip_optional(inner, p);
    p = skip_spaces(inner, p);
    std::size_t end = 0;
    auto group = read_group(inner, p, end);
    if (!group) {
      pos = p;
      continue;
    }
    auto caption = std::string(text::trim(remove_label_commands(*group)));
    if (!caption.empty()) captions.push_back(std::move(caption));
    pos = end;
  }
  return captions;
}

// Paragraphs are separated by blank lines; inside a paragraph whitespace is
// collapsed. The output is stable under repeated application.
std::string normalize_body(std::string_view body) {
  std::vector<std::string> paragraphs;
  std::string current;
  auto flush = [&] {
    auto p = text::collapse_whitespace(current);
    if (!p.empty()) paragraphs.push_back(std::move(p));
    current.clear();
  };
  for (const auto& line : text::split(body, '\n')) {
    if (text::trim(line).empty()) {
      flush();
    } else {
      current += line;
      current += '\n';
    }
  }
  flush();
  std::string out;
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (i) out += "\n\n";
    out += paragraphs[i];
  }
  return out;
}

std::string resolve_includes(std::string_view s, ParseReport& report) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = s.find('\\', pos);
    if (hit == std::string_view::npos) break;
    auto name = command_name_at(s, hit);
    if (name == "input" || name == "include" || name == "subfile") {
      std::size_t p = skip_spaces(s, hit + 1 + name.size());
      std::size_t end = 0;
      if (auto arg = read_group(s, p, end)) {
        report.warnings.push_back("unresolved include: " + std::string(text::trim(*arg)));
        out.append(s.substr(pos, hit - pos));
        pos = end;
        continue;
      }
    }
    out.append(s.substr(pos, hit + 1 + std::max<std::size_t>(name.size(), 1) - pos));
    pos = std::min(s.size(), hit + 1 + std::max<std::size_t>(name.size(), 1));
  }
  out.append(s.substr(pos));
  return out;
}

std::string drop_commands(std::string_view s, ParseReport& report) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = s.find('\\', pos);
    if (hit == std::string_view::npos) break;
    auto name = command_name_at(s, hit);
    std::size_t after = hit + 1 + name.size();
    if (name.empty()) {
      // Control symbol such as \% or \\: copy both characters.
      std::size_t stop = std::min(s.size(), hit + 2);
      out.append(s.substr(pos, stop - pos));
      pos = stop;
      continue;
    }
    bool with_arg = contains(kDroppedWithArg, name);
    if (!with_arg && !contains(kDroppedNoArg, name)) {
      out.append(s.substr(pos, after - pos));
      pos = after;
      continue;
    }
    out.append(s.substr(pos, hit - pos));
    std::size_t p = after;
    if (p < s.size() && s[p] == '*') ++p;
    std::size_t q = skip_spaces(s, skip_optional(s, p));
    std::size_t end = 0;
    if (with_arg && q < s.size() && s[q] == '{') {
      if (auto arg = read_group(s, q, end)) {
        if (name == "bibliography") report.notes.push_back("removed bibliography command: " + *arg);
        p = end;
      }
    }
    pos = p;
  }
  out.append(s.substr(pos));
  return out;
}

std::string drop_bibliography_env(std::string_view s, ParseReport& report) {
  const std::string_view open = "\\begin{thebibliography}";
  auto hit = s.find(open);
  if (hit == std::string_view::npos) return std::string(s);
  std::size_t after = 0;
  auto close = find_env_end(s, "thebibliography", hit + open.size(), after);
  std::string out(s.substr(0, hit));
  report.dropped_sections.push_back("References");
  if (close == std::string_view::npos) {
    report.warnings.push_back("unbalanced environment: thebibliography");
    return out;
  }
  out.append(s.substr(after));
  return out;
}

struct RawSection {
  std::string title;
  std::string body;
  SectionKind kind;
};

struct Heading {
  enum Level { section, sub, appendix_switch } level;
  bool starred = false;
  std::string title;
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::optional<Heading> heading_at(std::string_view s, std::size_t hit) {
  auto name = command_name_at(s, hit);
  Heading h;
  h.begin = hit;
  std::size_t p = hit + 1 + name.size();
  if (name == "appendix") {
    h.level = Heading::appendix_switch;
    h.end = p;
    return h;
  }
  if (name == "section") {
    h.level = Heading::section;
  } else if (name == "subsection" || name == "subsubsection" || name == "paragraph" ||
             name == "subparagraph") {
    h.level = Heading::sub;
  } else {
    return std::nullopt;
  }
  if (p < s.size() && s[p] == '*') {
    h.starred = true;
    ++p;
  }
  p = skip_optional(s, p);
  p = skip_spaces(s, p);
  std::size_t end = 0;
  auto group = read_group(s, p, end);
  if (!group) return std::nullopt;
  h.title = text::collapse_whitespace(*group);
  h.end = end;
  return h;
}

bool is_abstract_title(std::string_view title) { return text::normalize_title(title) == "abstract"; }

std::vector<RawSection> split_sections(std::string_view s, ParseReport& report) {
  std::vector<RawSection> out;
  std::size_t pos = 0;
  const std::string_view open = "\\begin{abstract}";
  if (starts_at(s, 0, open)) {
    std::size_t after = 0;
    auto close = find_env_end(s, "abstract", open.size(), after);
    if (close == std::string_view::npos) {
      report.warnings.push_back("unbalanced environment: abstract");
      close = s.find("\\section", open.size());
      if (close == std::string_view::npos) close = s.size();
      after = close;
    }
    out.push_back({"Abstract", std::string(s.substr(open.size(), close - open.size())), SectionKind::abstract});
    pos = after;
  }

  bool in_appendix = false;
  RawSection* current = nullptr;
  std::string leftover;
  auto append = [&](std::string_view chunk) {
    if (current) {
      current->body.append(chunk);
    } else {
      leftover.append(chunk);
    }
  };
  while (pos < s.size()) {
    auto hit = s.find('\\', pos);
    if (hit == std::string_view::npos) {
      append(s.substr(pos));
      break;
    }
    auto heading = heading_at(s, hit);
    if (!heading) {
      std::size_t stop = std::min(s.size(), hit + 2);
      append(s.substr(pos, stop - pos));
      pos = stop;
      continue;
    }
    append(s.substr(pos, hit - pos));
    pos = heading->end;
    switch (heading->level) {
      case Heading::appendix_switch:
        in_appendix = true;
        break;
      case Heading::sub:
        append("\n\n" + heading->title + "\n\n");
        break;
      case Heading::section: {
        SectionKind kind = heading->starred ? SectionKind::unnumbered
                                            : (in_appendix ? SectionKind::appendix : SectionKind::numbered);
        if (out.empty() && is_abstract_title(heading->title)) kind = SectionKind::abstract;
        out.push_back({heading->title, {}, kind});
        current = &out.back();
        break;
      }
    }
  }
  if (!text::trim(normalize_body(leftover)).empty()) {
    report.notes.push_back("discarded text between abstract and first section");
  }
  return out;
}

}  // namespace

std::string_view to_string(SectionKind kind) {
  switch (kind) {
    case SectionKind::abstract: return "abstract";
    case SectionKind::numbered: return "numbered";
    case SectionKind::appendix: return "appendix";
    case SectionKind::unnumbered: return "unnumbered";
    case SectionKind::excluded: return "excluded";
  }
  return "unknown";
}

std::string Section::ordinal() const {
  if (kind == SectionKind::numbered) return std::to_string(index);
  if (kind == SectionKind::appendix) return letter_ordinal(index);
  return {};
}

std::vector<std::string> ParsedPaper::display_names() const {
  std::vector<std::string> names;
  names.reserve(sections.size());
  for (const auto& s : sections) names.push_back(s.display_name);
  return names;
}

const Section* ParsedPaper::find(std::string_view display_name) const {
  for (const auto& s : sections)
    if (s.display_name == display_name) return &s;
  return nullptr;
}

std::vector<std::string> IngestOptions::default_excluded_titles() {
  return {"acknowledgments", "acknowledgements", "acknowledgment", "acknowledgement",
          "references",      "bibliography"};
}

std::string strip_comments(std::string_view text, ParseReport* report) {
  std::string out;
  out.reserve(text.size());
  std::size_t comments = 0;
  std::string verbatim_env;
  bool in_comment_env = false;

  std::size_t line_start = 0;
  while (line_start < text.size()) {
    auto nl = text.find('\n', line_start);
    bool has_nl = nl != std::string_view::npos;
    auto line = text.substr(line_start, (has_nl ? nl : text.size()) - line_start);
    line_start = has_nl ? nl + 1 : text.size();
    const std::string_view newline = has_nl ? "\n" : "";

    if (in_comment_env) {
      auto end = line.find("\\end{comment}");
      if (end != std::string_view::npos) {
        in_comment_env = false;
        auto rest = line.substr(end + 13);
        if (!text::trim(rest).empty()) {
          out.append(rest);
          out.append(newline);
        }
      }
      continue;
    }
    if (!verbatim_env.empty()) {
      out.append(line);
      out.append(newline);
      if (line.find("\\end{" + verbatim_env + "}") != std::string_view::npos) verbatim_env.clear();
      continue;
    }

    std::string kept;
    bool cut = false;
    std::size_t i = 0;
    while (i < line.size()) {
      char c = line[i];
      if (c == '%') {
        cut = true;
        ++comments;
        break;
      }
      if (c != '\\') {
        kept.push_back(c);
        ++i;
        continue;
      }
      if (starts_at(line, i, "\\verb") && i + 5 < line.size() &&
          !std::isalpha(static_cast<unsigned char>(line[i + 5]))) {
        std::size_t d = i + 5;
        if (line[d] == '*') ++d;
        if (d < line.size()) {
          auto close = line.find(line[d], d + 1);
          std::size_t stop = close == std::string_view::npos ? line.size() : close + 1;
          kept.append(line.substr(i, stop - i));
          i = stop;
          continue;
        }
      }
      if (starts_at(line, i, "\\url{") || starts_at(line, i, "\\href{")) {
        auto brace = line.find('{', i);
        auto close = line.find('}', brace);
        std::size_t stop = close == std::string_view::npos ? line.size() : close + 1;
        kept.append(line.substr(i, stop - i));
        i = stop;
        continue;
      }
      if (starts_at(line, i, "\\begin{")) {
        auto close = line.find('}', i + 7);
        if (close != std::string_view::npos) {
          auto name = line.substr(i + 7, close - i - 7);
          if (contains(kVerbatimEnvs, name)) {
            auto rest = line.substr(i);
            kept.append(rest);
            if (rest.find("\\end{" + std::string(name) + "}") == std::string_view::npos) {
              verbatim_env = std::string(name);
            }
            i = line.size();
            continue;
          }
          if (name == "comment") {
            ++comments;
            cut = true;
            in_comment_env = line.find("\\end{comment}", close) == std::string_view::npos;
            break;
          }
        }
      }
      kept.append(line.substr(i, std::min<std::size_t>(2, line.size() - i)));
      i += 2;
    }

    if (cut) {
      while (!kept.empty() && (kept.back() == ' ' || kept.back() == '\t')) kept.pop_back();
      if (text::trim(kept).empty()) continue;
    }
    out.append(kept);
    out.append(newline);
  }
  if (!verbatim_env.empty() && report) {
    report->warnings.push_back("unterminated verbatim environment: " + verbatim_env);
  }
  if (report && comments > 0) {
    report->notes.push_back("stripped " + std::to_string(comments) + " comment(s)");
  }
  return out;
}

std::string strip_preamble(std::string_view text) {
  auto env = text.find("\\begin{abstract}");
  std::size_t heading_pos = std::string_view::npos;
  std::size_t pos = 0;
  while ((pos = text.find("\\section", pos)) != std::string_view::npos) {
    auto h = heading_at(text, pos);
    if (h && h->level == Heading::section && is_abstract_title(h->title)) {
      heading_pos = pos;
      break;
    }
    pos += 8;
  }
  auto start = std::min(env, heading_pos);
  if (start == std::string_view::npos) {
    throw Error(ErrorCode::no_abstract_found,
                "no abstract found: the file does not look like a paper (expected \\begin{abstract} or an "
                "Abstract section)");
  }
  return std::string(text.substr(start));
}

std::vector<Section> drop_excluded_sections(std::vector<Section> sections,
                                            const std::vector<std::string>& excluded_titles,
                                            ParseReport& report) {
  std::vector<std::string> normalized;
  normalized.reserve(excluded_titles.size());
  for (const auto& t : excluded_titles) normalized.push_back(text::normalize_title(t));
  std::vector<Section> kept;
  for (auto& s : sections) {
    auto title = text::normalize_title(s.raw_title);
    if (std::find(normalized.begin(), normalized.end(), title) != normalized.end()) {
      report.dropped_sections.push_back(s.raw_title);
      continue;
    }
    kept.push_back(std::move(s));
  }
  return kept;
}

std::string reduce_floats_to_captions(std::string_view text, ParseReport& report) {
  std::string out;
  std::size_t pos = 0;
  std::size_t floats = 0;
  std::size_t tabulars = 0;
  while (true) {
    auto hit = text.find("\\begin{", pos);
    if (hit == std::string_view::npos) break;
    auto close_brace = text.find('}', hit + 7);
    if (close_brace == std::string_view::npos) break;
    auto name = text.substr(hit + 7, close_brace - hit - 7);
    bool is_float = contains(kFloatEnvs, name);
    bool is_tabular = contains(kTabularEnvs, name);
    if (!is_float && !is_tabular) {
      out.append(text.substr(pos, close_brace + 1 - pos));
      pos = close_brace + 1;
      continue;
    }
    out.append(text.substr(pos, hit - pos));
    std::size_t after = 0;
    auto end = find_env_end(text, name, close_brace + 1, after);
    if (end == std::string_view::npos) {
      report.warnings.push_back("unbalanced environment: " + std::string(name));
      end = text.find("\\section", close_brace);
      if (end == std::string_view::npos) end = text.size();
      after = end;
    }
    auto inner = text.substr(close_brace + 1, end - close_brace - 1);
    bool table_like = name.starts_with("table") || name.starts_with("wraptable") ||
                      name.starts_with("sidewaystable") || name.starts_with("longtable");
    if (is_float || name.starts_with("longtable")) {
      for (const auto& caption : extract_captions(inner)) {
        out += "\n\n";
        out += table_like ? "Table: " : "Figure: ";
        out += caption;
        out += "\n\n";
      }
    }
    if (is_float) {
      ++floats;
    } else {
      ++tabulars;
    }
    pos = after;
  }
  out.append(text.substr(pos));
  if (floats) report.notes.push_back("reduced " + std::to_string(floats) + " float(s) to captions");
  if (tabulars) report.notes.push_back("removed " + std::to_string(tabulars) + " tabular environment(s)");
  return out;
}

std::optional<std::string> extract_title(std::string_view preamble) {
  std::size_t pos = 0;
  while ((pos = preamble.find("\\title", pos)) != std::string_view::npos) {
    std::size_t p = pos + 6;
    if (p < preamble.size() && std::isalpha(static_cast<unsigned char>(preamble[p]))) {
      pos = p;
      continue;
    }
    p = skip_optional(preamble, p);
    p = skip_spaces(preamble, p);
    std::size_t end = 0;
    auto group = read_group(preamble, p, end);
    if (!group) return std::nullopt;
    std::string title;
    for (std::size_t i = 0; i < group->size(); ++i) {
      if ((*group)[i] == '\\' && i + 1 < group->size() && (*group)[i + 1] == '\\') {
        title += ' ';
        ++i;
      } else {
        title += (*group)[i];
      }
    }
    title = text::collapse_whitespace(title);
    if (title.empty()) return std::nullopt;
    return title;
  }
  return std::nullopt;
}

ParsedPaper parse_tex(const RawTexDocument& doc, const IngestOptions& options) {
  if (text::trim(doc.bytes).empty()) {
    throw Error(ErrorCode::empty_document, "empty document: " + doc.filename);
  }
  ParsedPaper paper;
  auto& report = paper.report;

  std::size_t repairs = 0;
  std::string source = text::repair_utf8(doc.bytes, repairs);
  if (repairs > 0) {
    report.warnings.push_back("encoding: replaced " + std::to_string(repairs) + " invalid UTF-8 byte(s)");
  }

  std::string cleaned = strip_comments(source, &report);
  if (auto end = cleaned.find("\\end{document}"); end != std::string::npos) cleaned.resize(end);

  std::string body = strip_preamble(cleaned);
  paper.title = extract_title(std::string_view(cleaned).substr(0, cleaned.size() - body.size()));
  if (cleaned.size() != body.size()) {
    report.notes.push_back("removed " + std::to_string(cleaned.size() - body.size()) + " byte(s) of preamble");
  }

  body = reduce_floats_to_captions(body, report);
  body = resolve_includes(body, report);
  body = drop_bibliography_env(body, report);
  body = drop_commands(body, report);

  auto raw = split_sections(body, report);
  std::vector<Section> sections;
  sections.reserve(raw.size());
  for (auto& r : raw) {
    Section s;
    s.raw_title = r.title;
    s.kind = r.kind;
    s.body = normalize_body(r.body);
    sections.push_back(std::move(s));
  }
  sections = drop_excluded_sections(std::move(sections), options.excluded_titles, report);

  int numbered = 0;
  int appendix = 0;
  for (auto& s : sections) {
    switch (s.kind) {
      case SectionKind::numbered:
        s.index = ++numbered;
        break;
      case SectionKind::appendix:
        s.index = ++appendix;
        break;
      default:
        s.index = 0;
        break;
    }
    auto ord = s.ordinal();
    s.display_name = ord.empty() ? s.raw_title : ord + " " + s.raw_title;
  }

  bool any_text = std::any_of(sections.begin(), sections.end(), [](const Section& s) { return !s.body.empty(); });
  if (!any_text) throw Error(ErrorCode::empty_document, "document has no section text: " + doc.filename);
  paper.sections = std::move(sections);
  return paper;
}

std::string render_tex(const ParsedPaper& paper) {
  std::string out;
  if (paper.title) out += "\\title{" + *paper.title + "}\n\n";
  bool appendix_open = false;
  for (const auto& s : paper.sections) {
    switch (s.kind) {
      case SectionKind::abstract:
        out += "\\begin{abstract}\n" + s.body + "\n\\end{abstract}\n\n";
        continue;
      case SectionKind::numbered:
        out += "\\section{" + s.raw_title + "}\n\n";
        break;
      case SectionKind::unnumbered:
      case SectionKind::excluded:
        out += "\\section*{" + s.raw_title + "}\n\n";
        break;
      case SectionKind::appendix:
        if (!appendix_open) out += "\\appendix\n\n";
        appendix_open = true;
        out += "\\section{" + s.raw_title + "}\n\n";
        break;
    }
    out += s.body + "\n\n";
  }
  return out;
}

void to_json(nlohmann::json& j, const Section& s) {
  j = nlohmann::json{{"index", s.index},
                     {"display_name", s.display_name},
                     {"raw_title", s.raw_title},
                     {"kind", to_string(s.kind)},
                     {"body", s.body}};
}

void to_json(nlohmann::json& j, const ParseReport& r) {
  j = nlohmann::json{{"warnings", r.warnings}, {"notes", r.notes}, {"dropped_sections", r.dropped_sections}};
}

void to_json(nlohmann::json& j, const ParsedPaper& p) {
  j = nlohmann::json{{"sections", p.sections}, {"report", p.report}};
  j["title"] = p.title ? nlohmann::json(*p.title) : nlohmann::json(nullptr);
}

}  // namespace aclready
