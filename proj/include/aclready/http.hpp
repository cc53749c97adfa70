#pragma once

#include "aclready/error.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace aclready {

struct HttpResult {
  // 0 when no HTTP response was received.
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& url, const std::string& body, const HttpHeaders& headers) = 0;
};

// cpp-httplib backed transport; https is supported through OpenSSL.
class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::chrono::seconds read_timeout = std::chrono::seconds(120))
      : read_timeout_(read_timeout) {}

  HttpResult post(const std::string& url, const std::string& body, const HttpHeaders& headers) override;

 private:
  std::chrono::seconds read_timeout_;
};

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};

// "https://api.openai.com/v1/embeddings" -> {"https://api.openai.com", "/v1/embeddings"}
SplitUrl split_url(const std::string& url);
std::string join_url(const std::string& base, const std::string& path);

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

bool is_transient_status(int status);

// Runs `fn`, retrying on transient ProviderErrors with exponential backoff.
template <class Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const ProviderError& e) {
      if (!e.transient() || attempt >= policy.max_retries) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(static_cast<std::int64_t>(backoff.count() * policy.multiplier));
  }
}

// POSTs JSON with an optional bearer token and returns the parsed response.
// Non-2xx statuses and unparseable bodies raise ProviderError.
nlohmann::json post_json(HttpTransport& transport, const std::string& url, const nlohmann::json& body,
                         const std::string& api_key);

// Empty when the variable is unset.
std::string api_key_from_env(const std::string& env_name);

// Wall time during which at least one scope is open. Overlapping calls
// from several threads count once.
class BusyClock {
 public:
  class Scope {
   public:
    explicit Scope(BusyClock& clock) : clock_(&clock) { clock_->enter(); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
    ~Scope() { clock_->leave(); }

   private:
    BusyClock* clock_;
  };

  std::int64_t nanos() const;

 private:
  void enter();
  void leave();

  mutable std::mutex mutex_;
  int active_ = 0;
  std::chrono::steady_clock::time_point since_;
  std::int64_t total_ = 0;
};

}  // namespace aclready
