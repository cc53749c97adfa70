#include "aclready/http.hpp"

#include <httplib.h>

#include <cstdlib>

namespace aclready {

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string join_url(const std::string& base, const std::string& path) {
  if (base.empty()) return path;
  bool base_slash = base.back() == '/';
  bool path_slash = !path.empty() && path.front() == '/';
  if (base_slash && path_slash) return base + path.substr(1);
  if (!base_slash && !path_slash) return base + "/" + path;
  return base + path;
}

HttpResult HttplibTransport::post(const std::string& url, const std::string& body, const HttpHeaders& headers) {
  auto parts = split_url(url);
  httplib::Client client(parts.scheme_host_port);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(read_timeout_);
  client.set_write_timeout(std::chrono::seconds(30));
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(parts.path, h, body, "application/json");
  if (!res) return {0, httplib::to_string(res.error())};
  return {res->status, res->body};
}

bool is_transient_status(int status) {
  return status == 0 || status == 408 || status == 409 || status == 429 || status >= 500;
}

nlohmann::json post_json(HttpTransport& transport, const std::string& url, const nlohmann::json& body,
                         const std::string& api_key) {
  HttpHeaders headers;
  if (!api_key.empty()) headers.emplace_back("Authorization", "Bearer " + api_key);
  auto res = transport.post(url, body.dump(), headers);
  if (res.status < 200 || res.status >= 300) {
    throw ProviderError(res.status, res.body, is_transient_status(res.status));
  }
  auto parsed = nlohmann::json::parse(res.body, nullptr, false);
  if (parsed.is_discarded()) throw ProviderError(res.status, "invalid JSON body: " + res.body, false);
  return parsed;
}

std::string api_key_from_env(const std::string& env_name) {
  if (env_name.empty()) return {};
  const char* v = std::getenv(env_name.c_str());
  return v ? std::string(v) : std::string();
}

void BusyClock::enter() {
  std::lock_guard lock(mutex_);
  if (active_++ == 0) since_ = std::chrono::steady_clock::now();
}

void BusyClock::leave() {
  std::lock_guard lock(mutex_);
  if (--active_ == 0) {
    total_ += std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - since_).count();
  }
}

std::int64_t BusyClock::nanos() const {
  std::lock_guard lock(mutex_);
  return total_;
}

}  // namespace aclready
