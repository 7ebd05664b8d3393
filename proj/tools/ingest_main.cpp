#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "provchain/common/error.hpp"
#include "provchain/ingest/ingest.hpp"

using namespace provchain;
using namespace provchain::ingest;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void print(const IngestTask& t) {
  std::cout << to_string(t.state) << "\t" << (t.hashes ? t.hashes->md5_hex : "-") << "\t" << t.path.string();
  if (t.state == TaskState::kFailed) std::cout << "\t" << t.error;
  std::cout << "\n";
}

void print(const Summary& s) {
  std::cout << "accepted " << s.accepted << ", duplicate " << s.duplicate << ", failed " << s.failed
            << ", skipped " << s.skipped << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hash files and notarize them through the asset API"};
  app.require_subcommand(1);
  std::string api = "http://127.0.0.1:8080";
  IngestConfig cfg;
  std::string journal_path = "ingest-journal.jsonl";
  std::vector<std::string> meta;
  int initial_ms = 1000, cap_ms = 60'000;
  app.add_option("--api", api, "Asset API base URL")->capture_default_str();
  app.add_option("--source-prefix", cfg.uri_prefix, "Prefix for source.uri")->capture_default_str();
  app.add_option("-j,--parallelism", cfg.parallelism, "Concurrent submissions")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--journal", journal_path, "Transition journal (JSON lines)")->capture_default_str();
  app.add_option("--max-attempts", cfg.backoff.max_attempts, "Attempts per file")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--backoff-initial-ms", initial_ms, "First retry delay")->capture_default_str();
  app.add_option("--backoff-factor", cfg.backoff.factor, "Retry delay multiplier")->capture_default_str();
  app.add_option("--backoff-cap-ms", cap_ms, "Longest retry delay")->capture_default_str();
  app.add_option("--meta", meta, "Extra key=value metadata (repeatable)");

  std::string dir;
  auto* scan = app.add_subcommand("scan", "Ingest every file under a directory once");
  scan->add_option("dir", dir, "Directory")->required()->check(CLI::ExistingDirectory);

  int interval_ms = 2000;
  auto* watch = app.add_subcommand("watch", "Keep ingesting new or changed files until interrupted");
  watch->add_option("dir", dir, "Directory")->required()->check(CLI::ExistingDirectory);
  watch->add_option("--interval-ms", interval_ms, "Poll interval")->capture_default_str();

  std::string path;
  std::string parent;
  auto* file = app.add_subcommand("file", "Ingest a single file, optionally derived from a parent asset");
  file->add_option("path", path, "File")->required();
  file->add_option("--parent-md5", parent, "md5 of the asset this file was derived from");

  CLI11_PARSE(app, argc, argv);

  cfg.backoff.initial = std::chrono::milliseconds(initial_ms);
  cfg.backoff.cap = std::chrono::milliseconds(cap_ms);
  for (const auto& kv : meta) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "--meta expects key=value, got '" << kv << "'\n";
      return 2;
    }
    cfg.metadata[kv.substr(0, eq)] = kv.substr(eq + 1);
  }

  try {
    auto journal = std::make_shared<Journal>(journal_path);
    Ingester ing(cfg, http_poster(api), journal);
    if (*scan) {
      std::vector<IngestTask> results;
      const auto s = ing.scan(dir, &results);
      for (const auto& t : results) print(t);
      print(s);
      return s.all_accepted() ? 0 : 1;
    }
    if (*watch) {
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto s = ing.watch(dir, std::chrono::milliseconds(interval_ms), g_stop);
      print(s);
      return s.all_accepted() ? 0 : 1;
    }
    auto task = ing.make_task(path, parent.empty() ? std::nullopt : std::optional<std::string>(parent));
    const auto t = ing.ingest_path(std::move(task));
    print(t);
    return is_accepted(t.state) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
