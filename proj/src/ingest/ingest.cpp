#include "provchain/ingest/ingest.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "provchain/api/ingest_message.hpp"
#include "provchain/common/error.hpp"
#include "provchain/common/url.hpp"

namespace provchain::ingest {

using nlohmann::json;

namespace {

constexpr std::pair<TaskState, std::string_view> kStateNames[] = {
    {TaskState::kPending, "pending"},    {TaskState::kSubmitted, "submitted"}, {TaskState::kAccepted, "accepted"},
    {TaskState::kDuplicate, "duplicate"}, {TaskState::kFailed, "failed"},
};

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

std::string error_text(const std::string& body) {
  try {
    auto j = json::parse(body);
    if (j.contains("message") && j["message"].is_string()) return j["message"].get<std::string>();
  } catch (const json::exception&) {
  }
  return body.substr(0, 200);
}

}  // namespace

std::string_view to_string(TaskState s) {
  for (const auto& [state, name] : kStateNames) {
    if (state == s) return name;
  }
  return "unknown";
}

TaskState parse_task_state(std::string_view s) {
  for (const auto& [state, name] : kStateNames) {
    if (name == s) return state;
  }
  throw Error(ErrorCode::kDecode, "unknown task state: " + std::string(s));
}

ledger::AssetRecord build_ingest_message(const IngestTask& task, const FileHashes& hashes, std::int64_t now_ms) {
  ledger::AssetRecord a;
  a.md5_index = hashes.md5_hex;
  a.sha256 = hashes.sha256_hex;
  a.processed_ts_ms = now_ms;
  a.source_uri = task.source_uri;
  a.parent_md5 = task.parent_md5;
  a.metadata = task.metadata;
  return a;
}

std::string source_uri_for(const std::string& prefix, const std::filesystem::path& path) {
  std::string p = prefix;
  while (!p.empty() && p.back() == '/') p.pop_back();
  return p + std::filesystem::absolute(path).lexically_normal().generic_string();
}

std::chrono::milliseconds Backoff::delay_after(std::uint32_t attempt) const {
  const double ms = static_cast<double>(initial.count()) * std::pow(factor, attempt == 0 ? 0 : attempt - 1);
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::min(ms, static_cast<double>(cap.count()))));
}

Poster http_poster(const std::string& api_url, std::chrono::milliseconds timeout) {
  const auto url = split_http_url(api_url);
  auto client = std::make_shared<httplib::Client>(url.origin);
  client->set_connection_timeout(timeout);
  client->set_read_timeout(timeout);
  client->set_write_timeout(timeout);
  auto mu = std::make_shared<std::mutex>();
  const std::string target = url.path + "/assets";
  return [client, mu, target](const std::string& body) {
    std::lock_guard lock(*mu);
    auto res = client->Post(target, body, "application/json");
    if (!res) return PostResult{0, httplib::to_string(res.error())};
    return PostResult{res->status, res->body};
  };
}

Journal::Journal(std::filesystem::path file) : path_(std::move(file)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error(ErrorCode::kIo, "cannot open journal " + path_.string());
}

void Journal::record(const JournalEntry& e) {
  json j = {{"at", e.at_ms},       {"path", e.path}, {"state", std::string(to_string(e.state))},
            {"attempt", e.attempt}, {"status", e.status}, {"md5", e.md5},
            {"detail", e.detail}};
  std::lock_guard lock(mu_);
  out_ << j.dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::kIo, "journal write failed: " + path_.string());
}

std::vector<JournalEntry> Journal::read(const std::filesystem::path& file) {
  std::vector<JournalEntry> out;
  std::ifstream in(file, std::ios::binary);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // no trailing newline: torn write
    try {
      const auto j = json::parse(line);
      JournalEntry e;
      e.at_ms = j.at("at").get<std::int64_t>();
      e.path = j.at("path").get<std::string>();
      e.state = parse_task_state(j.at("state").get<std::string>());
      e.attempt = j.at("attempt").get<std::uint32_t>();
      e.status = j.at("status").get<int>();
      e.md5 = j.at("md5").get<std::string>();
      e.detail = j.at("detail").get<std::string>();
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kDecode, "journal " + file.string() + ": " + ex.what());
    }
  }
  return out;
}

std::map<std::string, JournalEntry> Journal::replay(const std::filesystem::path& file) {
  std::map<std::string, JournalEntry> last;
  for (auto& e : read(file)) last[e.path] = std::move(e);
  return last;
}

Ingester::Ingester(IngestConfig config, Poster post, std::shared_ptr<Journal> journal, Sleeper sleep, Clock clock)
    : config_(std::move(config)),
      post_(std::move(post)),
      journal_(std::move(journal)),
      sleep_(sleep ? std::move(sleep) : Sleeper([](auto d) { std::this_thread::sleep_for(d); })),
      clock_(std::move(clock)) {
  if (config_.parallelism == 0) config_.parallelism = 1;
  if (config_.backoff.max_attempts == 0) config_.backoff.max_attempts = 1;
}

IngestTask Ingester::make_task(const std::filesystem::path& path, std::optional<std::string> parent_md5) const {
  IngestTask t;
  t.path = std::filesystem::absolute(path).lexically_normal();
  t.source_uri = source_uri_for(config_.uri_prefix, t.path);
  t.parent_md5 = std::move(parent_md5);
  t.metadata = config_.metadata;
  return t;
}

void Ingester::transition(IngestTask& task, TaskState state, const std::string& detail) {
  task.state = state;
  if (!journal_) return;
  JournalEntry e;
  e.at_ms = clock_();
  e.path = task.path.string();
  e.state = state;
  e.attempt = task.attempts;
  e.status = task.last_status;
  e.md5 = task.hashes ? task.hashes->md5_hex : "";
  e.detail = detail;
  journal_->record(e);
}

IngestTask Ingester::ingest_path(IngestTask task) {
  try {
    task.hashes = hash_file(task.path);
  } catch (const Error& e) {
    task.error = e.what();
    transition(task, TaskState::kFailed, task.error);
    return task;
  }
  transition(task, TaskState::kPending, std::to_string(task.hashes->byte_count) + " bytes");
  const std::string body = api::to_ingest_json(build_ingest_message(task, *task.hashes, clock_())).dump();

  while (true) {
    ++task.attempts;
    transition(task, TaskState::kSubmitted);
    PostResult res;
    try {
      res = post_(body);
    } catch (const std::exception& e) {
      res = {0, e.what()};
    }
    task.last_status = res.status;
    if (res.status == 201) {
      std::string md5;
      try {
        const auto j = json::parse(res.body);
        md5 = j.value("md5", "");
        task.tx_id = j.value("txId", "");
      } catch (const json::exception&) {
      }
      if (md5 != task.hashes->md5_hex) {
        task.error = "server acknowledged a different md5: '" + md5 + "'";
        transition(task, TaskState::kFailed, task.error);
      } else {
        transition(task, TaskState::kAccepted, task.tx_id);
      }
      return task;
    }
    if (res.status == 409) {
      transition(task, TaskState::kDuplicate, error_text(res.body));
      return task;
    }
    task.error = res.status == 0 ? res.body : "HTTP " + std::to_string(res.status) + ": " + error_text(res.body);
    if (!retryable(res.status) || task.attempts >= config_.backoff.max_attempts) {
      transition(task, TaskState::kFailed, task.error);
      return task;
    }
    sleep_(config_.backoff.delay_after(task.attempts));
  }
}

IngestTask Ingester::register_derived_asset(const std::string& parent_md5, const std::filesystem::path& derived) {
  return ingest_path(make_task(derived, parent_md5));
}

Summary Ingester::run_all(std::vector<IngestTask> tasks, std::vector<IngestTask>* results) {
  std::vector<IngestTask> done(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) done[i] = ingest_path(std::move(tasks[i]));
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min(config_.parallelism, tasks.size());
  for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  Summary s;
  for (const auto& t : done) {
    if (t.state == TaskState::kAccepted) ++s.accepted;
    else if (t.state == TaskState::kDuplicate) ++s.duplicate;
    else ++s.failed;
  }
  if (results) {
    for (auto& t : done) results->push_back(std::move(t));
  }
  return s;
}

Summary Ingester::scan(const std::filesystem::path& dir, std::vector<IngestTask>* results) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIo, dir.string() + " is not a directory");
  const auto seen = journal_ ? Journal::replay(journal_->path()) : std::map<std::string, JournalEntry>{};
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<IngestTask> tasks;
  std::size_t skipped = 0;
  for (const auto& f : files) {
    auto task = make_task(f);
    if (journal_ && task.path == std::filesystem::absolute(journal_->path()).lexically_normal()) continue;
    auto it = seen.find(task.path.string());
    if (it != seen.end() && is_accepted(it->second.state)) {
      ++skipped;
      continue;
    }
    tasks.push_back(std::move(task));
  }
  auto s = run_all(std::move(tasks), results);
  s.skipped = skipped;
  return s;
}

Summary Ingester::watch(const std::filesystem::path& dir, std::chrono::milliseconds interval,
                        const std::atomic<bool>& stop) {
  struct Seen {
    std::uintmax_t size;
    std::filesystem::file_time_type mtime;
  };
  std::map<std::filesystem::path, Seen> last_poll;
  std::map<std::filesystem::path, Seen> ingested;
  if (journal_) {
    for (const auto& [p, e] : Journal::replay(journal_->path())) {
      std::error_code ec;
      if (is_accepted(e.state)) {
        const auto size = std::filesystem::file_size(p, ec);
        if (!ec) ingested[p] = {size, std::filesystem::last_write_time(p, ec)};
      }
    }
  }
  Summary total;
  while (!stop) {
    std::map<std::filesystem::path, Seen> now;
    std::error_code ec;
    for (auto it = std::filesystem::recursive_directory_iterator(dir, ec);
         !ec && it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
      if (!it->is_regular_file()) continue;
      const auto p = std::filesystem::absolute(it->path()).lexically_normal();
      if (journal_ && p == std::filesystem::absolute(journal_->path()).lexically_normal()) continue;
      std::error_code fec;
      Seen s{it->file_size(fec), it->last_write_time(fec)};
      if (!fec) now[p] = s;
    }
    std::vector<IngestTask> ready;
    for (const auto& [p, s] : now) {
      auto prev = last_poll.find(p);
      if (prev == last_poll.end() || prev->second.size != s.size || prev->second.mtime != s.mtime) continue;
      auto done = ingested.find(p);
      if (done != ingested.end() && done->second.size == s.size && done->second.mtime == s.mtime) continue;
      ready.push_back(make_task(p));
    }
    if (!ready.empty()) {
      std::vector<IngestTask> results;
      const auto s = run_all(std::move(ready), &results);
      total.accepted += s.accepted;
      total.duplicate += s.duplicate;
      total.failed += s.failed;
      for (const auto& t : results) {
        // Failed files are retried when they change; accepted ones are left alone.
        ingested[t.path] = now[t.path];
      }
    }
    last_poll = std::move(now);
    for (auto waited = std::chrono::milliseconds(0); waited < interval && !stop;
         waited += std::chrono::milliseconds(20)) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  return total;
}

}  // namespace provchain::ingest
