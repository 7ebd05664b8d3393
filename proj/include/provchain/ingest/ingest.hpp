#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "provchain/common/time.hpp"
#include "provchain/ingest/hasher.hpp"
#include "provchain/ledger/types.hpp"

namespace provchain::ingest {

enum class TaskState { kPending, kSubmitted, kAccepted, kDuplicate, kFailed };

std::string_view to_string(TaskState s);
TaskState parse_task_state(std::string_view s);
// kAccepted and kDuplicate both mean the asset is on record.
inline bool is_accepted(TaskState s) { return s == TaskState::kAccepted || s == TaskState::kDuplicate; }

struct IngestTask {
  std::filesystem::path path;
  std::string source_uri;
  std::optional<std::string> parent_md5;
  std::map<std::string, std::string> metadata;
  std::uint32_t attempts = 0;
  TaskState state = TaskState::kPending;
  std::optional<FileHashes> hashes;
  std::string tx_id;
  int last_status = 0;
  std::string error;
};

ledger::AssetRecord build_ingest_message(const IngestTask& task, const FileHashes& hashes, std::int64_t now_ms);

// "<prefix><absolute path>"; a trailing slash on the prefix is dropped.
std::string source_uri_for(const std::string& prefix, const std::filesystem::path& path);

struct Backoff {
  std::chrono::milliseconds initial{1000};
  double factor = 2.0;
  std::chrono::milliseconds cap{60'000};
  std::uint32_t max_attempts = 8;

  // Delay after the given failed attempt (1-based).
  std::chrono::milliseconds delay_after(std::uint32_t attempt) const;
};

// status 0 means the request never got an HTTP answer.
struct PostResult {
  int status = 0;
  std::string body;
};
using Poster = std::function<PostResult(const std::string& json_body)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

// POSTs to <api_url>/assets over HTTP/1.1.
Poster http_poster(const std::string& api_url, std::chrono::milliseconds timeout = std::chrono::seconds(10));

struct JournalEntry {
  std::int64_t at_ms = 0;
  std::string path;
  TaskState state = TaskState::kPending;
  std::uint32_t attempt = 0;
  int status = 0;
  std::string md5;
  std::string detail;
};

// One JSON line per task transition; a single serialized writer.
class Journal {
 public:
  explicit Journal(std::filesystem::path file);
  void record(const JournalEntry& entry);
  const std::filesystem::path& path() const { return path_; }

  static std::vector<JournalEntry> read(const std::filesystem::path& file);
  // Last state per path.
  static std::map<std::string, JournalEntry> replay(const std::filesystem::path& file);

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::ofstream out_;
};

struct IngestConfig {
  std::string uri_prefix = "network.provchain/ingest/getfile";
  std::size_t parallelism = 4;
  Backoff backoff;
  std::map<std::string, std::string> metadata;
};

struct Summary {
  std::size_t accepted = 0;
  std::size_t duplicate = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;  // already on record per the journal
  bool all_accepted() const { return failed == 0; }
};

class Ingester {
 public:
  Ingester(IngestConfig config, Poster post, std::shared_ptr<Journal> journal, Sleeper sleep = {},
           Clock clock = system_clock());

  IngestTask make_task(const std::filesystem::path& path, std::optional<std::string> parent_md5 = {}) const;

  // hash -> build -> POST, retrying 429, 5xx and transport failures.
  IngestTask ingest_path(IngestTask task);

  IngestTask register_derived_asset(const std::string& parent_md5, const std::filesystem::path& derived);

  // Every regular file below `dir`, in path order, `parallelism` at a time.
  // Files the journal already shows as on record are skipped.
  Summary scan(const std::filesystem::path& dir, std::vector<IngestTask>* results = nullptr);

  // Polls `dir` every `interval`, ingesting files whose size and mtime held
  // still across two polls, until `stop` becomes true.
  Summary watch(const std::filesystem::path& dir, std::chrono::milliseconds interval, const std::atomic<bool>& stop);

  const IngestConfig& config() const { return config_; }

 private:
  void transition(IngestTask& task, TaskState state, const std::string& detail = {});
  Summary run_all(std::vector<IngestTask> tasks, std::vector<IngestTask>* results);

  IngestConfig config_;
  Poster post_;
  std::shared_ptr<Journal> journal_;
  Sleeper sleep_;
  Clock clock_;
};

}  // namespace provchain::ingest
