#pragma once

#include "aclready/checklist.hpp"
#include "aclready/config.hpp"
#include "aclready/pipeline.hpp"
#include "aclready/response.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace aclready {

struct ServiceOptions {
  std::filesystem::path data_root = "aclready-data";
  AppConfig config;
  QuestionBank bank;
  bool stub_models = false;
  // Replaces the configured providers (tests).
  std::optional<Providers> providers;
  // Built web client served at "/" when set.
  std::filesystem::path static_dir;
};

// Thrown by submit(); carries the HTTP status to answer with.
class UploadRejected : public std::runtime_error {
 public:
  UploadRejected(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Returns the bound port (pass 0 for an ephemeral one).
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void serve();
  void stop();

  // Library-level operations behind the HTTP handlers.
  std::string submit(const std::string& filename, std::string bytes);
  std::optional<JobRecord> job(const std::string& job_id) const;
  std::vector<ProgressEvent> events(const std::string& job_id) const;
  // Blocks until the job reaches one of `states` or the timeout passes.
  std::optional<JobRecord> wait_for(const std::string& job_id, std::initializer_list<JobState> states,
                                    std::chrono::milliseconds timeout) const;
  std::vector<std::string> sweep();

  const ServiceOptions& options() const { return options_; }

 private:
  struct Job;

  std::shared_ptr<Job> find(const std::string& job_id) const;
  void append_event(Job& job, Stage stage, std::optional<std::string> qid, std::optional<std::string> detail);
  void persist(const Job& job) const;
  void worker_loop(std::stop_token st);
  void run_job(const std::shared_ptr<Job>& job);
  void load_existing();
  void install_routes();

  ServiceOptions options_;
  Providers providers_;
  JobStore store_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> serving_{false};
  std::atomic<bool> served_{false};

  mutable std::mutex jobs_mutex_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;

  std::mutex queue_mutex_;
  std::condition_variable_any queue_cv_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::vector<std::jthread> workers_;
  std::mutex sweep_mutex_;
  std::condition_variable_any sweep_cv_;
  std::jthread sweeper_;
};

// Serialized "id/event/data" record for one progress event.
std::string format_sse(const ProgressEvent& e);

}  // namespace aclready
