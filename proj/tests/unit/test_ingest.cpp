#include <catch_amalgamated.hpp>

#include <httplib.h>
#include <sys/resource.h>

#include <fstream>
#include <random>
#include <thread>

#include "provchain/api/http_server.hpp"
#include "provchain/api/ingest_message.hpp"
#include "provchain/ingest/ingest.hpp"
#include "provchain/verify/verify.hpp"
#include "support/api_fixture.hpp"
#include "support/oracles.hpp"

using namespace provchain;
using namespace provchain::ingest;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

void write_file(const std::filesystem::path& p, std::string_view data) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary).write(data.data(), static_cast<std::streamsize>(data.size()));
}

std::string random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng());
  return s;
}

// A scripted API: each call pops the next reply; an empty script answers 201.
struct ScriptedApi {
  std::vector<PostResult> script;
  std::vector<std::string> bodies;
  std::mutex mu;

  Poster poster() {
    return [this](const std::string& body) {
      std::lock_guard lock(mu);
      bodies.push_back(body);
      if (!script.empty()) {
        auto r = script.front();
        script.erase(script.begin());
        if (r.status != 201) return r;
      }
      const auto j = json::parse(body);
      return PostResult{201, json{{"md5", j["hash.md5"]}, {"txId", "ab"}, {"status", "pending"}}.dump()};
    };
  }
};

struct SleepLog {
  std::vector<std::chrono::milliseconds> delays;
  Sleeper sleeper() {
    return [this](std::chrono::milliseconds d) { delays.push_back(d); };
  }
};

const Sleeper no_sleep = [](std::chrono::milliseconds) {};

Clock fixed_clock(std::int64_t ms = 1519316242073LL) {
  return [ms] { return ms; };
}

}  // namespace

TEST_CASE("file hashes match the reference vectors") {
  auto dir = fixture::scratch_dir("hash-vectors");
  write_file(dir / "empty", "");
  write_file(dir / "abc", "abc");
  const auto empty = hash_file(dir / "empty");
  CHECK(empty.md5_hex == "d41d8cd98f00b204e9800998ecf8427e");
  CHECK(empty.sha256_hex == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(empty.byte_count == 0);
  const auto abc = hash_file(dir / "abc");
  CHECK(abc.md5_hex == "900150983cd24fb0d6963f7d28e17f72");
  CHECK(abc.sha256_hex == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(abc.md5_hex == oracle::md5_hex("abc"));
  CHECK(abc.sha256_hex == oracle::sha256_hex("abc"));

  CHECK_THROWS_AS(hash_file(dir / "missing"), Error);
  CHECK_THROWS_AS(hash_file(dir), Error);
}

TEST_CASE("file hashes agree with the oracle on a random corpus") {
  auto dir = fixture::scratch_dir("hash-corpus");
  std::mt19937_64 rng(20180406);
  std::uniform_int_distribution<std::size_t> size(0, 1 << 20);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    // Bias towards chunk boundaries now and then.
    std::size_t n = size(rng);
    if (i % 50 == 0) n = kHashChunk * (1 + i % 4) + (i % 3) - 1;
    const auto data = random_bytes(rng, n);
    const auto p = dir / "f";
    write_file(p, data);
    const auto h = hash_file(p);
    mismatches += h.md5_hex != oracle::md5_hex(data) || h.sha256_hex != oracle::sha256_hex(data) ||
                  h.byte_count != n;
  }
  CHECK(mismatches == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("hashing a 1 GiB sparse file stays within bounded memory") {
  auto dir = fixture::scratch_dir("hash-sparse");
  const auto p = dir / "sparse";
  { std::ofstream(p, std::ios::binary); }
  std::filesystem::resize_file(p, std::uintmax_t{1} << 30);
  rusage before{};
  getrusage(RUSAGE_SELF, &before);
  const auto h = hash_file(p);
  rusage after{};
  getrusage(RUSAGE_SELF, &after);
  CHECK(h.byte_count == (std::uint64_t{1} << 30));
  // ru_maxrss is in KiB; a non-streaming hasher would grow by the file size.
  CHECK(after.ru_maxrss - before.ru_maxrss < 64 * 1024);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ingest message shape") {
  IngestTask task;
  task.source_uri = source_uri_for("network.provchain/nifi/getfile/", "/mnt/data");
  CHECK(task.source_uri == "network.provchain/nifi/getfile/mnt/data");
  FileHashes h{"900150983cd24fb0d6963f7d28e17f72",
               "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad", 3};
  const auto j = api::to_ingest_json(build_ingest_message(task, h, 1519316242073LL));
  CHECK(j.size() == 4);
  CHECK(j["hash.md5"].is_string());
  CHECK(j["hash.sha256"].is_string());
  CHECK(j["source.uri"].is_string());
  REQUIRE(j["processed.ts"].is_number_integer());
  CHECK(std::to_string(j["processed.ts"].get<std::int64_t>()).size() == 13);

  task.parent_md5 = "d41d8cd98f00b204e9800998ecf8427e";
  CHECK(api::to_ingest_json(build_ingest_message(task, h, 1)).at("parent.md5") == *task.parent_md5);
}

TEST_CASE("backoff schedule") {
  Backoff b;
  std::vector<std::int64_t> got;
  for (std::uint32_t i = 1; i <= 8; ++i) got.push_back(b.delay_after(i).count());
  CHECK(got == std::vector<std::int64_t>{1000, 2000, 4000, 8000, 16000, 32000, 60000, 60000});
}

TEST_CASE("ingest_path retries transient failures only") {
  auto dir = fixture::scratch_dir("ingest-retry");
  write_file(dir / "a.bin", "abc");
  auto journal = std::make_shared<Journal>(dir / "journal.jsonl");

  SECTION("healthy") {
    ScriptedApi api;
    SleepLog sleeps;
    Ingester ing({}, api.poster(), journal, sleeps.sleeper(), fixed_clock());
    auto t = ing.ingest_path(ing.make_task(dir / "a.bin"));
    CHECK(t.state == TaskState::kAccepted);
    CHECK(t.attempts == 1);
    CHECK(sleeps.delays.empty());
    const auto body = json::parse(api.bodies.at(0));
    CHECK(body["hash.md5"] == "900150983cd24fb0d6963f7d28e17f72");
    CHECK(body["processed.ts"] == 1519316242073LL);
    CHECK(body["source.uri"] == "network.provchain/ingest/getfile" + (dir / "a.bin").string());
  }
  SECTION("down for two attempts then up") {
    ScriptedApi api;
    api.script = {{0, "connection refused"}, {503, "{}"}};
    SleepLog sleeps;
    Ingester ing({}, api.poster(), journal, sleeps.sleeper(), fixed_clock());
    auto t = ing.ingest_path(ing.make_task(dir / "a.bin"));
    CHECK(t.state == TaskState::kAccepted);
    CHECK(t.attempts == 3);
    CHECK(sleeps.delays == std::vector<std::chrono::milliseconds>{1000ms, 2000ms});
  }
  SECTION("rate limited") {
    ScriptedApi api;
    api.script = {{429, "{}"}};
    Ingester ing({}, api.poster(), journal, no_sleep, fixed_clock());
    CHECK(ing.ingest_path(ing.make_task(dir / "a.bin")).state == TaskState::kAccepted);
  }
  SECTION("duplicate") {
    ScriptedApi api;
    api.script = {{409, R"({"error":"duplicate-asset","message":"already notarized"})"}};
    Ingester ing({}, api.poster(), journal, no_sleep, fixed_clock());
    auto t = ing.ingest_path(ing.make_task(dir / "a.bin"));
    CHECK(t.state == TaskState::kDuplicate);
    CHECK(is_accepted(t.state));
  }
  SECTION("client errors are terminal") {
    ScriptedApi api;
    api.script = {{400, R"({"error":"validation","message":"hash.sha256 is required"})"}};
    SleepLog sleeps;
    Ingester ing({}, api.poster(), journal, sleeps.sleeper(), fixed_clock());
    auto t = ing.ingest_path(ing.make_task(dir / "a.bin"));
    CHECK(t.state == TaskState::kFailed);
    CHECK(t.attempts == 1);
    CHECK(t.error.find("hash.sha256 is required") != std::string::npos);
    CHECK(sleeps.delays.empty());
  }
  SECTION("retries are bounded") {
    ScriptedApi api;
    api.script = std::vector<PostResult>(20, PostResult{502, "bad gateway"});
    SleepLog sleeps;
    Ingester ing({}, api.poster(), journal, sleeps.sleeper(), fixed_clock());
    auto t = ing.ingest_path(ing.make_task(dir / "a.bin"));
    CHECK(t.state == TaskState::kFailed);
    CHECK(t.attempts == 8);
    CHECK(sleeps.delays.size() == 7);
    CHECK(sleeps.delays.back() == 60000ms);
  }
  SECTION("an acknowledgement for another md5 is not acceptance") {
    Ingester ing({}, [](const std::string&) { return PostResult{201, R"({"md5":"00000000000000000000000000000000"})"}; },
                 journal, no_sleep, fixed_clock());
    CHECK(ing.ingest_path(ing.make_task(dir / "a.bin")).state == TaskState::kFailed);
  }
  SECTION("unreadable file") {
    ScriptedApi api;
    Ingester ing({}, api.poster(), journal, no_sleep, fixed_clock());
    auto t = ing.ingest_path(ing.make_task(dir / "gone.bin"));
    CHECK(t.state == TaskState::kFailed);
    CHECK(api.bodies.empty());
  }
}

TEST_CASE("every task survives injected faults and the journal accounts for it") {
  auto dir = fixture::scratch_dir("ingest-faults");
  std::mt19937_64 rng(7);
  for (int i = 0; i < 60; ++i) write_file(dir / "data" / ("f" + std::to_string(i)), random_bytes(rng, rng() % 4096));
  auto journal = std::make_shared<Journal>(dir / "journal.jsonl");

  std::mutex mu;
  std::set<std::string> stored;
  std::mt19937 fault_rng(99);
  auto flaky = [&](const std::string& body) -> PostResult {
    std::lock_guard lock(mu);
    const auto md5 = json::parse(body)["hash.md5"].get<std::string>();
    switch (fault_rng() % 6) {
      case 0: return {0, "connection reset"};
      case 1: return {503, "{}"};
      case 2: return {429, "{}"};
      case 3:
        // Stored, but the reply is lost: the retry sees a duplicate.
        stored.insert(md5);
        return {0, "timeout"};
      default: break;
    }
    if (!stored.insert(md5).second) return {409, R"({"message":"duplicate"})"};
    return {201, json{{"md5", md5}, {"txId", "t"}}.dump()};
  };
  IngestConfig cfg;
  cfg.parallelism = 6;
  cfg.backoff.max_attempts = 50;
  Ingester ing(cfg, flaky, journal, no_sleep);
  std::vector<IngestTask> results;
  const auto s = ing.scan(dir / "data", &results);
  CHECK(s.failed == 0);
  CHECK(s.accepted + s.duplicate == 60);
  CHECK(stored.size() == 60);

  const auto last = Journal::replay(journal->path());
  REQUIRE(last.size() == 60);
  for (const auto& [path, e] : last) {
    INFO(path);
    CHECK(is_accepted(e.state));
  }
  // A second pass skips everything already on record.
  const auto again = ing.scan(dir / "data");
  CHECK(again.skipped == 60);
  CHECK(again.accepted + again.duplicate + again.failed == 0);

  // Per task the journal is ordered pending, submitted..., terminal.
  std::map<std::string, std::vector<TaskState>> per_path;
  for (const auto& e : Journal::read(journal->path())) per_path[e.path].push_back(e.state);
  for (const auto& [path, states] : per_path) {
    CHECK(states.front() == TaskState::kPending);
    CHECK(is_accepted(states.back()));
  }
}

TEST_CASE("journal tolerates a torn tail") {
  auto dir = fixture::scratch_dir("journal-torn");
  {
    Journal j(dir / "j.jsonl");
    j.record({1, "/x", TaskState::kAccepted, 1, 201, "m", ""});
  }
  { std::ofstream(dir / "j.jsonl", std::ios::app) << R"({"at":2,"path":"/x","sta)"; }
  const auto last = Journal::replay(dir / "j.jsonl");
  REQUIRE(last.size() == 1);
  CHECK(last.at("/x").state == TaskState::kAccepted);
}

namespace {

struct LiveApi {
  fixture::ApiStack stack;
  api::HttpServer server;
  explicit LiveApi(const std::string& name) : stack(name), server(*stack.api, "127.0.0.1", 0) {}
  std::string url() const { return server.url(); }
};

}  // namespace

TEST_CASE("scan, lineage and verification against a live api") {
  LiveApi live("ingest-live");
  auto& s = live.stack;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 12; ++i) write_file(s.dir / "data" / ("f" + std::to_string(i)), random_bytes(rng, 1000 + i));
  write_file(s.dir / "raw.fastq", "ACGT" + random_bytes(rng, 100));
  write_file(s.dir / "aligned.bam", "BAM" + random_bytes(rng, 100));
  write_file(s.dir / "summary.vcf", "VCF" + random_bytes(rng, 100));

  auto journal = std::make_shared<Journal>(s.dir / "journal.jsonl");
  Ingester ing({}, http_poster(live.url()), journal);
  const auto summary = ing.scan(s.dir / "data");
  CHECK(summary.accepted == 12);
  CHECK(s.master().pending().size() == 12);
  s.master().mine();

  // Already on chain: 409 is reported as a duplicate.
  CHECK(ing.ingest_path(ing.make_task(s.dir / "data" / "f0")).state == TaskState::kDuplicate);

  const auto raw = ing.ingest_path(ing.make_task(s.dir / "raw.fastq"));
  REQUIRE(raw.state == TaskState::kAccepted);
  s.master().mine();
  const auto aligned = ing.register_derived_asset(raw.hashes->md5_hex, s.dir / "aligned.bam");
  REQUIRE(aligned.state == TaskState::kAccepted);
  s.master().mine();
  const auto summ = ing.register_derived_asset(aligned.hashes->md5_hex, s.dir / "summary.vcf");
  REQUIRE(summ.state == TaskState::kAccepted);
  s.master().mine();

  // Lineage walk from the leaf terminates at the raw asset, parents strictly earlier.
  const auto state = s.master().snapshot();
  std::vector<std::string> walk;
  std::optional<std::string> at = summ.hashes->md5_hex;
  std::uint64_t height = UINT64_MAX;
  while (at) {
    const auto view = ledger::query_asset(*state, *at);
    REQUIRE(view);
    CHECK(view->height < height);
    height = view->height;
    walk.push_back(*at);
    at = view->record.parent_md5;
  }
  CHECK(walk == std::vector<std::string>{summ.hashes->md5_hex, aligned.hashes->md5_hex, raw.hashes->md5_hex});
  httplib::Client cli("127.0.0.1", live.server.port());
  CHECK(json::parse(cli.Get("/assets/" + aligned.hashes->md5_hex)->body)["parentAsset"] == raw.hashes->md5_hex);

  write_file(s.dir / "orphan.bin", "orphan");
  auto orphan = ing.register_derived_asset(fixture::md5_of(424242), s.dir / "orphan.bin");
  CHECK(orphan.state == TaskState::kFailed);
  CHECK(orphan.last_status == 400);

  // Verification verdicts.
  auto v = verify::verify_file(s.dir / "data" / "f3", live.url());
  CHECK(v.verdict == verify::Verdict::kUnanchored);
  CHECK(v.status == "NotAnchored");
  s.deepen();
  s.anchors->submit_anchor();
  v = verify::verify_file(s.dir / "data" / "f3", live.url());
  CHECK(v.verdict == verify::Verdict::kUnanchored);
  CHECK(v.status == "Pending");
  s.mock->step();
  v = verify::verify_file(s.dir / "data" / "f3", live.url());
  CHECK(v.verdict == verify::Verdict::kVerified);
  CHECK(v.document["sha256"] == v.local->sha256_hex);
  const auto out = verify::render(v, false);
  CHECK(out.ends_with("VERDICT: Confirmed\n"));
  CHECK(out.find("\"multiChainHash\"") != std::string::npos);
  CHECK(verify::render(v, true) == "VERDICT: Confirmed\n");

  write_file(s.dir / "never.bin", "never ingested");
  CHECK(verify::verify_file(s.dir / "never.bin", live.url()).verdict == verify::Verdict::kNotFound);
  CHECK(verify::verify_file(s.dir / "missing.bin", live.url()).verdict == verify::Verdict::kError);
  live.server.stop();
  CHECK(verify::verify_file(s.dir / "data" / "f3", live.url()).verdict == verify::Verdict::kError);
}

TEST_CASE("verification never trusts the md5 lookup alone") {
  // A server that answers every md5 with a colliding record.
  auto dir = fixture::scratch_dir("verify-tampered");
  write_file(dir / "file", "genuine contents");
  httplib::Server tampered;
  tampered.Get(R"(/assets/([0-9a-f]{32}))", [](const httplib::Request& req, httplib::Response& res) {
    json doc = {{"asset", req.matches[1].str()},
                {"sha256", oracle::sha256_hex("colliding contents")},
                {"ethStatus", "Confirmed"},
                {"confirmations", "12"}};
    res.set_content(doc.dump(), "application/json");
  });
  const int port = tampered.bind_to_any_port("127.0.0.1");
  std::thread t([&] { tampered.listen_after_bind(); });
  tampered.wait_until_ready();
  auto v = verify::verify_file(dir / "file", "http://127.0.0.1:" + std::to_string(port));
  tampered.stop();
  t.join();
  CHECK(v.verdict == verify::Verdict::kMismatch);
  CHECK(static_cast<int>(v.verdict) == 3);
  CHECK(verify::render(v, true) == "VERDICT: Sha256Mismatch\n");

  const FileHashes local{"900150983cd24fb0d6963f7d28e17f72", oracle::sha256_hex("abc"), 3};
  CHECK(verify::classify(local, 200, "{\"ethStatus\":\"Confirmed\"}").verdict == verify::Verdict::kMismatch);
  CHECK(verify::classify(local, 500, "oops").verdict == verify::Verdict::kError);
  CHECK(verify::classify(local, 404, "{}").verdict == verify::Verdict::kNotFound);
}

TEST_CASE("watch mode picks up files once they are stable") {
  auto dir = fixture::scratch_dir("ingest-watch");
  std::filesystem::create_directories(dir / "in");
  ScriptedApi api;
  auto journal = std::make_shared<Journal>(dir / "journal.jsonl");
  Ingester ing({}, api.poster(), journal, no_sleep);
  std::atomic<bool> stop{false};
  Summary summary;
  std::thread watcher([&] { summary = ing.watch(dir / "in", 50ms, stop); });
  write_file(dir / "in" / "one", "1");
  write_file(dir / "in" / "sub" / "two", "22");
  const auto deadline = std::chrono::steady_clock::now() + 10s;
  auto accepted = [&] {
    std::size_t n = 0;
    for (const auto& [_, e] : Journal::replay(journal->path())) n += is_accepted(e.state);
    return n;
  };
  while (accepted() < 2 && std::chrono::steady_clock::now() < deadline) std::this_thread::sleep_for(20ms);
  std::this_thread::sleep_for(200ms);  // idle polls must not resubmit
  stop = true;
  watcher.join();
  CHECK(summary.accepted == 2);
  CHECK(api.bodies.size() == 2);
}
