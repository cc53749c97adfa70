#include "aclready/service.hpp"

#include "aclready/error.hpp"
#include "aclready/text.hpp"

#include <httplib.h>

#include <iostream>
#include <random>

namespace aclready {

using namespace std::chrono_literals;

struct Service::Job {
  mutable std::mutex mutex;
  mutable std::condition_variable_any cv;
  JobRecord record;
  std::vector<ProgressEvent> events;
};

std::string format_sse(const ProgressEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.stage)) +
         "\ndata: " + nlohmann::json(e).dump() + "\n\n";
}

namespace {

std::string new_job_id() {
  static std::mutex m;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(m);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  auto v = rng();
  for (int i = 0; i < 16; ++i, v >>= 4) id.push_back(kHex[v & 0xF]);
  return id;
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", code}, {"message", message}}.dump(), "application/json");
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::unknown_job:
    case ErrorCode::unknown_question: return 404;
    case ErrorCode::job_not_in_review:
    case ErrorCode::invalid_transition: return 409;
    case ErrorCode::section_e_unanswered: return 422;
    default: return 500;
  }
}

std::optional<JobState> state_for(Stage s) {
  switch (s) {
    case Stage::parsing: return JobState::parsing;
    case Stage::chunking: return JobState::chunking;
    case Stage::embedding: return JobState::embedding;
    case Stage::inferencing: return JobState::inferencing;
    default: return std::nullopt;
  }
}

bool ready(JobState s) { return s == JobState::review || s == JobState::done; }

nlohmann::json job_view(const JobRecord& r) {
  nlohmann::json j = r;
  auto order = nlohmann::json::array();
  for (const auto& resp : r.responses) order.push_back(resp.qid);
  j["order"] = order;
  return j;
}

}  // namespace

Service::Service(ServiceOptions options)
    : options_(std::move(options)),
      providers_(options_.providers ? *options_.providers : make_providers(options_.config, options_.stub_models)),
      store_(options_.data_root),
      server_(std::make_unique<httplib::Server>()) {
  load_existing();
  install_routes();
  auto n = std::max<std::size_t>(1, options_.config.service.max_concurrent_jobs);
  for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
  sweeper_ = std::jthread([this](std::stop_token st) {
    while (!st.stop_requested()) {
      try {
        sweep();
      } catch (const std::exception& e) {
        std::cerr << "retention sweep failed: " << e.what() << "\n";
      }
      std::unique_lock lock(sweep_mutex_);
      sweep_cv_.wait_for(lock, st, 1h, [] { return false; });
    }
  });
}

Service::~Service() {
  stop();
  sweeper_.request_stop();
  for (auto& w : workers_) w.request_stop();
  queue_cv_.notify_all();
  sweep_cv_.notify_all();
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  if (!server_->bind_to_port(host, port)) throw Error(ErrorCode::io_error, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Service::serve() {
  serving_ = true;
  if (!stopping_) server_->listen_after_bind();
  served_ = true;
}

void Service::stop() {
  stopping_ = true;
  {
    std::lock_guard lock(jobs_mutex_);
    for (auto& [id, job] : jobs_) job->cv.notify_all();
  }
  // serve() may not be listening yet; httplib ignores stop() until it is.
  if (serving_) {
    while (!served_ && !server_->is_running()) std::this_thread::sleep_for(1ms);
  }
  server_->stop();
}

std::shared_ptr<Service::Job> Service::find(const std::string& job_id) const {
  std::lock_guard lock(jobs_mutex_);
  auto it = jobs_.find(job_id);
  return it == jobs_.end() ? nullptr : it->second;
}

void Service::append_event(Job& job, Stage stage, std::optional<std::string> qid, std::optional<std::string> detail) {
  {
    std::lock_guard lock(job.mutex);
    if (!job.events.empty() && is_terminal(job.events.back().stage)) return;
    ProgressEvent e;
    e.seq = job.events.size() + 1;
    e.job_id = job.record.job_id;
    e.stage = stage;
    e.qid = std::move(qid);
    e.detail = std::move(detail);
    e.timestamp = iso8601_utc(std::chrono::system_clock::now());
    job.events.push_back(std::move(e));
  }
  job.cv.notify_all();
}

// Caller holds job.mutex.
void Service::persist(const Job& job) const {
  store_.save(job.record);
  store_.write_artifact(job.record.job_id, "events.json", nlohmann::json(job.events).dump(1) + "\n");
}

std::string Service::submit(const std::string& filename, std::string bytes) {
  if (!text::ends_with_icase(filename, ".tex")) throw UploadRejected(415, "only .tex files are accepted");
  if (bytes.size() > options_.config.service.max_upload_bytes) {
    throw UploadRejected(413, "file exceeds " + std::to_string(options_.config.service.max_upload_bytes) + " bytes");
  }
  auto job = std::make_shared<Job>();
  job->record.job_id = new_job_id();
  job->record.filename = std::filesystem::path(filename).filename().string();
  job->record.created_at = iso8601_utc(std::chrono::system_clock::now());
  job->record.bank_version = options_.bank.version;
  job->record.state = JobState::parsing;
  store_.write_artifact(job->record.job_id, "source.tex", bytes);
  append_event(*job, Stage::uploaded, std::nullopt, job->record.filename);
  {
    std::lock_guard lock(job->mutex);
    persist(*job);
  }
  {
    std::lock_guard lock(jobs_mutex_);
    jobs_[job->record.job_id] = job;
  }
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(job);
  }
  queue_cv_.notify_one();
  return job->record.job_id;
}

std::optional<JobRecord> Service::job(const std::string& job_id) const {
  auto j = find(job_id);
  if (!j) return std::nullopt;
  std::lock_guard lock(j->mutex);
  return j->record;
}

std::vector<ProgressEvent> Service::events(const std::string& job_id) const {
  auto j = find(job_id);
  if (!j) throw Error(ErrorCode::unknown_job, "unknown job " + job_id);
  std::lock_guard lock(j->mutex);
  return j->events;
}

std::optional<JobRecord> Service::wait_for(const std::string& job_id, std::initializer_list<JobState> states,
                                           std::chrono::milliseconds timeout) const {
  auto j = find(job_id);
  if (!j) return std::nullopt;
  std::unique_lock lock(j->mutex);
  j->cv.wait_for(lock, timeout, [&] {
    return std::find(states.begin(), states.end(), j->record.state) != states.end();
  });
  return j->record;
}

void Service::worker_loop(std::stop_token st) {
  while (!st.stop_requested()) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(queue_mutex_);
      if (!queue_cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
      job = queue_.front();
      queue_.pop_front();
    }
    try {
      run_job(job);
    } catch (const std::exception& e) {
      std::cerr << "job failed outside the pipeline: " << e.what() << "\n";
      {
        std::lock_guard lock(job->mutex);
        job->record.state = JobState::failed;
        job->record.failure_reason = std::string("internal error: ") + e.what();
      }
      append_event(*job, Stage::failed, std::nullopt, std::string("internal error: ") + e.what());
    }
  }
}

void Service::run_job(const std::shared_ptr<Job>& job) {
  JobRecord initial;
  {
    std::lock_guard lock(job->mutex);
    initial = job->record;
  }
  const auto dir = store_.job_dir(initial.job_id);
  RawTexDocument doc{read_file(dir / "source.tex"), initial.filename};

  // review/failed are published only after the final record is in place.
  std::optional<std::pair<Stage, std::optional<std::string>>> final_event;
  auto on_stage = [&](Stage s, const std::optional<std::string>& qid, const std::optional<std::string>& detail) {
    if (s == Stage::review || s == Stage::failed) {
      final_event.emplace(s, detail);
      return;
    }
    if (auto st = state_for(s)) {
      std::lock_guard lock(job->mutex);
      job->record.state = *st;
    }
    append_event(*job, s, qid, detail);
  };
  PipelineOptions popts;
  popts.embedding_cache = dir / "embeddings.json";
  auto run = run_pipeline(initial, doc, options_.bank, options_.config, providers_, on_stage, popts);

  if (run.paper) store_.write_artifact(initial.job_id, "sections.json", nlohmann::json(*run.paper).dump(2) + "\n");
  if (run.store) store_.write_artifact(initial.job_id, "nodes.json", nlohmann::json(*run.store).dump(2) + "\n");
  {
    std::lock_guard lock(job->mutex);
    job->record = run.job;
    store_.save(job->record);
  }
  if (final_event) append_event(*job, final_event->first, std::nullopt, final_event->second);
  {
    std::lock_guard lock(job->mutex);
    persist(*job);
  }
  job->cv.notify_all();
}

void Service::load_existing() {
  for (const auto& id : store_.list()) {
    try {
      auto record = store_.load(id);
      if (!record) continue;
      auto job = std::make_shared<Job>();
      job->record = std::move(*record);
      auto events_path = store_.job_dir(id) / "events.json";
      if (std::filesystem::exists(events_path)) {
        job->events = nlohmann::json::parse(read_file(events_path)).get<std::vector<ProgressEvent>>();
      }
      if (!ready(job->record.state) && job->record.state != JobState::failed) {
        job->record.state = JobState::failed;
        job->record.failure_reason = "interrupted by a service restart";
        append_event(*job, Stage::failed, std::nullopt, job->record.failure_reason);
        persist(*job);
      }
      jobs_[id] = job;
    } catch (const std::exception& e) {
      std::cerr << "skipping unreadable job " << id << ": " << e.what() << "\n";
    }
  }
}

std::vector<std::string> Service::sweep() {
  auto removed = store_.sweep(std::chrono::hours(24) * options_.config.service.retention_days);
  std::lock_guard lock(jobs_mutex_);
  for (const auto& id : removed) jobs_.erase(id);
  return removed;
}

void Service::install_routes() {
  auto& srv = *server_;
  srv.set_payload_max_length(options_.config.service.max_upload_bytes + 1024 * 1024);
  if (!options_.static_dir.empty()) srv.set_mount_point("/", options_.static_dir.string());

  srv.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });

  srv.Post("/api/v1/jobs", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data() || !req.has_file("file")) {
      return send_error(res, 400, "BadRequest", "expected a multipart upload with a 'file' field");
    }
    const auto file = req.get_file_value("file");
    try {
      auto id = submit(file.filename, file.content);
      res.status = 202;
      res.set_content(nlohmann::json{{"job_id", id}, {"state", "parsing"}}.dump(), "application/json");
    } catch (const UploadRejected& e) {
      send_error(res, e.status(), e.status() == 415 ? "UnsupportedFileType" : "TooLarge", e.what());
    }
  });

  srv.Get(R"(/api/v1/jobs/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto record = job(req.matches[1]);
    if (!record) return send_error(res, 404, "UnknownJob", "unknown job");
    nlohmann::json j{{"job_id", record->job_id},
                     {"filename", record->filename},
                     {"state", to_string(record->state)},
                     {"created_at", record->created_at},
                     {"failure_reason", record->failure_reason ? nlohmann::json(*record->failure_reason)
                                                               : nlohmann::json(nullptr)}};
    res.set_content(j.dump(), "application/json");
  });

  srv.Get(R"(/api/v1/jobs/([0-9a-f]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    auto j = find(req.matches[1]);
    if (!j) return send_error(res, 404, "UnknownJob", "unknown job");
    std::uint64_t after = 0;
    if (req.has_header("Last-Event-ID")) {
      try {
        after = std::stoull(req.get_header_value("Last-Event-ID"));
      } catch (const std::exception&) {
        after = 0;
      }
    }
    auto next = std::make_shared<std::uint64_t>(after + 1);
    auto last_write = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    res.set_chunked_content_provider("text/event-stream", [this, j, next, last_write](std::size_t,
                                                                                      httplib::DataSink& sink) {
      std::string out;
      bool terminal = false;
      {
        std::unique_lock lock(j->mutex);
        j->cv.wait_for(lock, 250ms, [&] { return j->events.size() >= *next || stopping_.load(); });
        while (j->events.size() >= *next) {
          const auto& e = j->events[*next - 1];
          out += format_sse(e);
          terminal = is_terminal(e.stage);
          ++*next;
        }
        if (!terminal && !j->events.empty() && *next > j->events.size() && is_terminal(j->events.back().stage)) {
          terminal = true;  // resumed after the terminal event
        }
      }
      if (stopping_) {
        sink.done();
        return true;
      }
      auto now = std::chrono::steady_clock::now();
      if (out.empty() && !terminal && now - *last_write > 15s) out = ": keep-alive\n\n";
      if (!out.empty()) {
        if (!sink.write(out.data(), out.size())) return false;
        *last_write = now;
      }
      if (terminal) sink.done();
      return true;
    });
  });

  srv.Get(R"(/api/v1/jobs/([0-9a-f]+)/responses)", [this](const httplib::Request& req, httplib::Response& res) {
    auto record = job(req.matches[1]);
    if (!record) return send_error(res, 404, "UnknownJob", "unknown job");
    if (!ready(record->state)) {
      return send_error(res, 409, "NotReady", "job is " + std::string(to_string(record->state)));
    }
    res.set_content(job_view(*record).dump(), "application/json");
  });

  srv.Patch(R"(/api/v1/jobs/([0-9a-f]+)/responses/([A-Za-z0-9]+))",
            [this](const httplib::Request& req, httplib::Response& res) {
              auto j = find(req.matches[1]);
              if (!j) return send_error(res, 404, "UnknownJob", "unknown job");
              auto body = nlohmann::json::parse(req.body, nullptr, false);
              if (body.is_discarded() || !body.is_object() || !body.contains("text") || !body["text"].is_string()) {
                return send_error(res, 400, "BadRequest", "expected a JSON object with a string 'text'");
              }
              try {
                std::lock_guard lock(j->mutex);
                apply_edit(j->record, req.matches[2].str(), body["text"].get<std::string>());
                persist(*j);
                res.set_content(nlohmann::json(*j->record.find(req.matches[2].str())).dump(), "application/json");
              } catch (const Error& e) {
                send_error(res, status_for(e.code()), to_string(e.code()), e.what());
              }
            });

  srv.Get(R"(/api/v1/jobs/([0-9a-f]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
    auto j = find(req.matches[1]);
    if (!j) return send_error(res, 404, "UnknownJob", "unknown job");
    std::string markdown;
    std::string filename;
    bool became_done = false;
    try {
      std::lock_guard lock(j->mutex);
      if (!ready(j->record.state)) {
        return send_error(res, 409, "NotReady", "job is " + std::string(to_string(j->record.state)));
      }
      markdown = export_markdown(j->record, options_.bank);
      filename = std::filesystem::path(j->record.filename).stem().string() + "-checklist.md";
      store_.write_artifact(j->record.job_id, "checklist.md", markdown);
      if (j->record.state == JobState::review) {
        transition(j->record, JobState::done);
        became_done = true;
      }
    } catch (const Error& e) {
      return send_error(res, status_for(e.code()), to_string(e.code()), e.what());
    }
    if (became_done) {
      append_event(*j, Stage::done, std::nullopt, std::nullopt);
      std::lock_guard lock(j->mutex);
      persist(*j);
    }
    res.set_header("Content-Disposition", "attachment; filename=\"" + filename + "\"");
    res.set_content(markdown, "text/markdown; charset=utf-8");
  });
}

}  // namespace aclready
