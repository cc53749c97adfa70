// Command-line front end: headless runs, the HTTP service, and parse dumps.
#include "aclready/checklist.hpp"
#include "aclready/config.hpp"
#include "aclready/error.hpp"
#include "aclready/pipeline.hpp"
#include "aclready/response.hpp"
#include "aclready/service.hpp"
#include "aclready/tex_ingest.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <pthread.h>
#include <thread>

namespace fs = std::filesystem;
using namespace aclready;

namespace {

enum Exit { ok = 0, usage = 1, parse_failure = 2, provider_failure = 3, io_failure = 4 };

int exit_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::no_abstract_found:
    case ErrorCode::empty_document: return parse_failure;
    case ErrorCode::embedder_unavailable:
    case ErrorCode::provider_error:
    case ErrorCode::context_overflow:
    case ErrorCode::unparseable_response: return provider_failure;
    case ErrorCode::io_error: return io_failure;
    default: return usage;
  }
}

struct Common {
  std::string config_path;
  std::string bank_path;
  bool stub = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--question-bank", c.bank_path, "checklist question bank JSON");
  cmd->add_flag("--stub-llm", c.stub, "use the offline stub chat model and stub embedder");
}

AppConfig config_of(const Common& c) { return c.config_path.empty() ? AppConfig{} : load_config(c.config_path); }

QuestionBank bank_of(const Common& c) {
  return load_question_bank(c.bank_path.empty() ? default_question_bank_path() : fs::path(c.bank_path));
}

RawTexDocument read_tex(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::io_error, "no such file: " + path);
  return RawTexDocument{read_file(path), fs::path(path).filename().string()};
}

int cmd_run(const std::string& input, std::string output, bool dump_nodes, const std::string& job_json,
            const Common& common) {
  auto doc = read_tex(input);
  auto config = config_of(common);
  auto bank = bank_of(common);
  if (output.empty()) output = fs::path(input).replace_extension(".checklist.md").string();

  JobRecord job;
  job.job_id = "cli";
  job.filename = doc.filename;
  job.created_at = iso8601_utc(std::chrono::system_clock::now());
  auto on_stage = [](Stage s, const std::optional<std::string>& qid, const std::optional<std::string>& detail) {
    std::cerr << "[" << to_string(s) << "]";
    if (qid) std::cerr << " " << *qid;
    if (detail) std::cerr << " " << *detail;
    std::cerr << "\n";
  };
  auto run = run_pipeline(job, doc, bank, config, make_providers(config, common.stub), on_stage);

  if (dump_nodes && run.store) {
    auto nodes_path = fs::path(output).replace_extension(".nodes.json");
    write_file_atomic(nodes_path, nlohmann::json(*run.store).dump(2) + "\n");
    std::cerr << "nodes written to " << nodes_path.string() << "\n";
  }
  if (!job_json.empty()) write_file_atomic(job_json, nlohmann::json(run.job).dump(2) + "\n");
  if (run.failure) {
    std::cerr << "error: " << run.job.failure_reason.value_or("pipeline failed") << "\n";
    return exit_for(*run.failure);
  }
  ExportOptions opts;
  opts.placeholder_for_unanswered = true;
  write_file_atomic(output, export_markdown(run.job, bank, opts));
  std::cerr << "[done] " << output << " (" << run.job.pipeline_elapsed_s << " s)\n";
  return ok;
}

int cmd_parse(const std::string& input, const std::string& output) {
  auto paper = parse_tex(read_tex(input));
  auto text = nlohmann::json(paper).dump(2) + "\n";
  if (output.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(output, text);
  }
  return ok;
}

int cmd_serve(const std::string& host, int port, const std::string& data_root, const std::string& static_dir,
              const Common& common) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServiceOptions opts;
  opts.data_root = data_root;
  opts.config = config_of(common);
  opts.bank = bank_of(common);
  opts.stub_models = common.stub;
  opts.static_dir = static_dir;
  Service service(std::move(opts));
  int bound = service.bind(host, port);
  std::cerr << "listening on http://" << host << ":" << bound << "/api/v1\n";

  std::jthread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    std::cerr << "shutting down\n";
    service.stop();
  });
  service.serve();
  pthread_kill(waiter.native_handle(), SIGTERM);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Responsible NLP checklist assistant"};
  app.require_subcommand(1);

  Common common;
  std::string input;
  std::string output;
  bool dump_nodes = false;
  std::string job_json;
  auto* run = app.add_subcommand("run", "answer the checklist for one .tex file and write markdown");
  run->add_option("path", input, "paper source (.tex)")->required();
  run->add_option("-o,--output", output, "markdown output path");
  run->add_flag("--dump-nodes", dump_nodes, "also write the chunk graph as JSON next to the output");
  run->add_option("--job-json", job_json, "also write the full job record as JSON");
  add_common(run, common);

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_root = "aclready-data";
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--data-root", data_root, "directory for job records and artifacts");
  serve->add_option("--static-dir", static_dir, "built web client to serve at /");
  add_common(serve, common);

  std::string parse_input;
  std::string parse_output;
  auto* parse = app.add_subcommand("parse", "print the parsed sections of a .tex file as JSON");
  parse->add_option("path", parse_input)->required();
  parse->add_option("-o,--output", parse_output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(input, output, dump_nodes, job_json, common);
    if (*serve) return cmd_serve(host, port, data_root, static_dir, common);
    if (*parse) return cmd_parse(parse_input, parse_output);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage;
  }
  return usage;
}
