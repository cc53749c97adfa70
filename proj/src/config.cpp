#include "aclready/config.hpp"

#include "aclready/error.hpp"
#include "aclready/text.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace aclready {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::config_error, where + ": " + what);
}

std::size_t to_size(const std::string& v, const std::string& where) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) fail(where, "expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(where, "expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& where) {
  auto l = text::to_lower(v);
  if (l == "true" || l == "yes" || l == "1" || l == "on") return true;
  if (l == "false" || l == "no" || l == "0" || l == "off") return false;
  fail(where, "expected true or false, got '" + v + "'");
}

}  // namespace

AppConfig parse_config(std::string_view input, const std::string& source) {
  AppConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"model.base_url", [&](auto& v, auto&) { c.model.provider_base_url = v; }},
      {"model.id", [&](auto& v, auto&) { c.model.model_id = v; }},
      {"model.temperature", [&](auto& v, auto& w) { c.model.temperature = to_real(v, w); }},
      {"model.api_key_env", [&](auto& v, auto&) { c.model.api_key_env = v; }},
      {"model.max_context_chars", [&](auto& v, auto& w) { c.model.max_context_chars = to_size(v, w); }},
      {"model.max_retries", [&](auto& v, auto& w) { c.model.retry.max_retries = static_cast<int>(to_size(v, w)); }},
      {"embedding.base_url", [&](auto& v, auto&) { c.embedding.provider_base_url = v; }},
      {"embedding.id", [&](auto& v, auto&) { c.embedding.model_id = v; }},
      {"embedding.api_key_env", [&](auto& v, auto&) { c.embedding.api_key_env = v; }},
      {"embedding.max_batch", [&](auto& v, auto& w) { c.embedding.max_batch = to_size(v, w); }},
      {"chunking.breakpoint_percentile", [&](auto& v, auto& w) { c.chunking.breakpoint_percentile = to_real(v, w); }},
      {"chunking.max_parent_chars", [&](auto& v, auto& w) { c.chunking.max_parent_chars = to_size(v, w); }},
      {"chunking.embed_concurrency", [&](auto& v, auto& w) { c.chunking.embed_concurrency = to_size(v, w); }},
      {"retrieval.top_k", [&](auto& v, auto& w) { c.top_k = to_size(v, w); }},
      {"orchestrator.parallel_questions", [&](auto& v, auto& w) { c.parallel_questions = to_bool(v, w); }},
      {"ingest.excluded_sections",
       [&](auto& v, auto&) {
         c.ingest.excluded_titles.clear();
         for (const auto& t : text::split(v, ','))
           if (auto n = text::normalize_title(t); !n.empty()) c.ingest.excluded_titles.push_back(n);
       }},
      {"service.max_concurrent_jobs", [&](auto& v, auto& w) { c.service.max_concurrent_jobs = to_size(v, w); }},
      {"service.max_upload_bytes", [&](auto& v, auto& w) { c.service.max_upload_bytes = to_size(v, w); }},
      {"service.retention_days", [&](auto& v, auto& w) { c.service.retention_days = static_cast<int>(to_size(v, w)); }},
  };

  int line_no = 0;
  for (const auto& raw : text::split(input, '\n')) {
    ++line_no;
    auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto where = source + ":" + std::to_string(line_no);
    auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(where, "expected 'key = value'");
    std::string key(text::trim(line.substr(0, eq)));
    std::string value(text::trim(line.substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (text::ends_with_icase(key, "api_key") || text::ends_with_icase(key, ".key")) {
      fail(where, "API keys must be provided through the environment, not the config file");
    }
    auto it = setters.find(key);
    if (it == setters.end()) fail(where, "unknown key '" + key + "'");
    it->second(value, where);
  }

  if (c.model.model_id.empty()) fail(source, "model.id must not be empty");
  if (c.embedding.model_id.empty()) fail(source, "embedding.id must not be empty");
  if (c.model.temperature < 0.0 || c.model.temperature > 2.0) fail(source, "model.temperature must be in [0, 2]");
  if (c.chunking.breakpoint_percentile < 0.0 || c.chunking.breakpoint_percentile > 100.0) {
    fail(source, "chunking.breakpoint_percentile must be in [0, 100]");
  }
  if (c.top_k == 0) fail(source, "retrieval.top_k must be positive");
  if (c.embedding.max_batch == 0) fail(source, "embedding.max_batch must be positive");
  if (c.service.max_concurrent_jobs == 0) fail(source, "service.max_concurrent_jobs must be positive");
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace aclready
