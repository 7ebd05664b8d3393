// Runs every primary acceptance criterion and prints one PASS/FAIL line each.
// Exit status is non-zero when any criterion fails.

#include <httplib.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

#include "provchain/api/http_server.hpp"
#include "provchain/api/ingest_message.hpp"
#include "provchain/ingest/ingest.hpp"
#include "provchain/ledger/block_log.hpp"
#include "support/api_fixture.hpp"
#include "support/corrupting_backend.hpp"
#include "support/golden.hpp"
#include "support/oracles.hpp"

#ifndef PROVCHAIN_VERIFY_BIN
#error "PROVCHAIN_VERIFY_BIN must name the verify tool"
#endif

using namespace provchain;
using namespace provchain::ledger;
using namespace provchain::network;
using fixture::Cluster;
using fixture::seeded_key;
using nlohmann::json;
using Steady = std::chrono::steady_clock;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

double seconds_since(Steady::time_point t0) {
  return std::chrono::duration<double>(Steady::now() - t0).count();
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", s);
  return buf;
}

const PermissionSet kClient{Permission::kConnect, Permission::kSend, Permission::kReceive};

// Asset submissions rotate across the given nodes.
void submit_round_robin(Cluster& c, const std::vector<std::string>& ids, int first, int count) {
  for (int i = first; i < first + count; ++i) c[ids[static_cast<std::size_t>(i) % ids.size()]].submit_asset(fixture::asset(i));
}

std::shared_ptr<anchor::AnchorService> anchor_service(Cluster& c, std::shared_ptr<anchor::MockPublicChain> mock,
                                                      const std::filesystem::path& log_path) {
  auto wallet = seeded_key("wallet");
  mock->set_balance(wallet.address(), anchor::Wei(1'000'000'000'000'000'000ULL));
  Node& master = c.master();
  return std::make_shared<anchor::AnchorService>([&master] { return master.snapshot(); }, mock, wallet,
                                                 std::make_shared<anchor::AnchorLog>(log_path),
                                                 anchor::AnchorConfig{}, c.clock());
}

Result tamper_detection() {
  const auto t0 = Steady::now();
  const auto dir = fixture::scratch_dir("acc-tamper");
  Cluster c({"master", "alice", "bob"}, dir / "nodes");
  c.grant("alice", kClient);
  c.grant("bob", kClient);
  c.connect_all();
  c.sync_all();
  auto mock = std::make_shared<anchor::MockPublicChain>();
  auto anchors = anchor_service(c, mock, dir / "anchors.jsonl");

  int next_asset = 1;
  while (c.master().snapshot()->height() < 100) {
    const auto h = c.master().snapshot()->height() + 1;
    // 200 assets over blocks 3..100.
    const int due = static_cast<int>((200 * (h - 2)) / 98) - (next_asset - 1);
    submit_round_robin(c, c.ids, next_asset, due);
    next_asset += due;
    c.master().mine();
    if (h == 50 || h == 100) {
      anchors->submit_anchor("scheduled");
      mock->step();
    }
  }
  const auto records = anchors->log().records();
  for (const auto& id : c.ids) {
    if (c[id].snapshot()->tip_hash() != c.master().snapshot()->tip_hash()) return {false, id + " diverged"};
  }
  if (next_asset - 1 != 200 || records.size() != 2) return {false, "setup: wrong asset or anchor count"};

  const auto stored = BlockLog(dir / "nodes" / "bob").read_all();
  if (!validate_chain_bytes(stored, c.params).valid || !anchor::audit_anchors_bytes(stored, records, c.params).clean()) {
    return {false, "untouched chain did not validate"};
  }
  const std::uint64_t max_height = 100 - anchor::AnchorConfig{}.confirm_depth;
  std::mt19937_64 rng(500);
  int chain_fail = 0, anchor_flag = 0;
  for (int trial = 0; trial < 500; ++trial) {
    auto mutated = stored;
    const auto h = static_cast<std::size_t>(rng() % (max_height + 1));
    auto& rec = mutated[h];
    rec[rng() % rec.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    chain_fail += !validate_chain_bytes(mutated, c.params).valid;
    anchor_flag += !anchor::audit_anchors_bytes(mutated, records, c.params).mismatches.empty();
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "validate_chain failed " << chain_fail << "/500, anchor mismatch " << anchor_flag << "/500, anchors at heights "
    << records[0].private_height << " and " << records[1].private_height << ", " << fmt_seconds(secs);
  return {chain_fail == 500 && anchor_flag == 500 && secs < 60.0, d.str()};
}

Result rollback_detection() {
  int detected = 0;
  std::string first_failure;
  for (int trial = 0; trial < 50; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    Cluster c({"master", "alice", "bob"});
    c.grant("alice", kClient);
    c.grant("bob", kClient);
    c.connect_all();
    c.sync_all();
    auto mock = std::make_shared<anchor::MockPublicChain>();
    auto anchors = anchor_service(c, mock, fixture::scratch_dir("acc-rollback") / "anchors.jsonl");

    int next_asset = 1;
    while (c.master().snapshot()->height() < 60) {
      const int n = 1 + static_cast<int>(rng() % 3);
      submit_round_robin(c, c.ids, next_asset, n);
      next_asset += n;
      c.master().mine();
      if (c.master().snapshot()->height() == 56) anchors->submit_anchor();
    }
    mock->step();
    const auto record = *anchors->log().latest();

    // Colluders rebuild from height 40, dropping one asset issued after it.
    const auto honest = fixture::chain_of(c.master());
    std::vector<LedgerTransaction> replay;
    for (std::size_t h = 41; h < honest.size(); ++h) {
      for (const auto& tx : honest[h].txs) replay.push_back(tx);
    }
    const auto victim = replay[rng() % replay.size()];
    auto ledger = std::make_shared<Ledger>(c.params, c.genesis);
    for (std::size_t h = 1; h <= 40; ++h) ledger->append(honest[h]);
    Node evil({"master", seeded_key("master"), "mem://evil", {}, std::chrono::milliseconds(500)}, ledger,
              c.net->endpoint("mem://evil"), c.clock());
    c.net->bind("mem://evil", [&evil](const Bytes& e, const std::string& r) { return evil.handle(e, r); });
    for (const auto& tx : replay) {
      if (tx.id() != victim.id()) evil.pending().add(tx);
    }
    while (evil.snapshot()->height() <= honest.size()) evil.mine();

    bool ok = true;
    for (const auto& id : c.ids) {
      auto session = c[id].handshake("mem://evil");
      auto r = c[id].sync_with_peer(session);
      const auto state = c[id].snapshot();
      ok = ok && r.adopted_remote && state->tip_hash() == evil.snapshot()->tip_hash();
      const auto md5 = victim.asset()->md5_index;
      ok = ok && !query_asset(*state, md5);
      // The verifier: hash at the anchored height against the public record.
      ok = ok && state->blocks.at(record.private_height)->hash().hex() != record.private_blockhash;
      ok = ok && !anchor::audit_anchors(fixture::chain_of(c[id]), {record}, c.params).mismatches.empty();
    }
    ok = ok && record.private_height == 50;
    detected += ok;
    if (!ok && first_failure.empty()) first_failure = " (first miss: trial " + std::to_string(trial) + ")";
  }
  return {detected == 50, "rollback from height 40 detected against the height-50 anchor in " +
                              std::to_string(detected) + "/50 trials" + first_failure};
}

struct Cli {
  int exit_code = -1;
  std::string output;
};

Cli run_verify(const std::string& api, const std::filesystem::path& file) {
  const std::string cmd = std::string("'") + PROVCHAIN_VERIFY_BIN + "' --api '" + api + "' '" + file.string() + "'";
  Cli out;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.output.append(buf, n);
  const int status = ::pclose(p);
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

Result end_to_end() {
  const auto t0 = Steady::now();
  fixture::ApiStack s("acc-e2e");
  api::HttpServer server(*s.api, "127.0.0.1", 0);
  std::mt19937_64 rng(64);
  std::map<std::filesystem::path, std::string> expected;
  for (int i = 0; i < 1000; ++i) {
    std::string data(rng() % (64 * 1024 + 1), '\0');
    for (auto& ch : data) ch = static_cast<char>(rng());
    const auto p = s.dir / "files" / ("file-" + std::to_string(i) + ".bin");
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary).write(data.data(), static_cast<std::streamsize>(data.size()));
    expected[std::filesystem::absolute(p)] = oracle::sha256_hex(data);
  }
  ingest::IngestConfig cfg;
  cfg.parallelism = 4;
  ingest::Ingester ing(cfg, ingest::http_poster(server.url()),
                       std::make_shared<ingest::Journal>(s.dir / "journal.jsonl"));
  const auto summary = ing.scan(s.dir / "files");
  if (summary.accepted != 1000) return {false, "ingest accepted " + std::to_string(summary.accepted) + "/1000"};
  s.master().mine();
  s.deepen();
  s.anchors->submit_anchor();
  s.mock->step();

  int exit_zero = 0, sha_match = 0;
  for (const auto& [path, sha] : expected) {
    const auto cli = run_verify(server.url(), path);
    exit_zero += cli.exit_code == 0;
    const auto open = cli.output.find('{');
    const auto close = cli.output.rfind('}');
    if (open == std::string::npos || close == std::string::npos) continue;
    try {
      sha_match += json::parse(cli.output.substr(open, close - open + 1)).value("sha256", "") == sha;
    } catch (const json::exception&) {
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "CLI exit 0 for " << exit_zero << "/1000, sha256 equals oracle for " << sha_match << "/1000, "
    << fmt_seconds(secs);
  return {exit_zero == 1000 && sha_match == 1000 && secs < 300.0, d.str()};
}

Result signature_soundness() {
  std::mt19937_64 rng(1000);
  int recovered = 0, v_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto key = crypto::PrivateKey::random();
    anchor::EthTransaction tx;
    tx.nonce = rng() % 100000;
    tx.gas_price = anchor::Wei(1 + rng() % 200'000'000'000ULL);
    Bytes digest_input(32);
    for (auto& b : digest_input) b = static_cast<std::uint8_t>(rng());
    tx.data = anchor::anchor_payload(to_hex(digest_input));
    tx.gas_limit = anchor::with_safety_margin(anchor::intrinsic_gas(tx.data));
    tx.to = key.address();
    const auto raw = anchor::sign_and_encode(tx, key).raw();
    const auto decoded = anchor::SignedEthTransaction::decode(raw);
    recovered += decoded.sender() == key.address() && decoded.tx == tx;
    v_ok += decoded.v == 27 || decoded.v == 28;
  }
  const auto gkey = crypto::PrivateKey::from_hex(golden::kKey);
  anchor::EthTransaction g;
  g.nonce = golden::kNonce;
  g.gas_price = golden::kGasPrice;
  g.gas_limit = golden::kGas;
  g.to = gkey.address();
  g.data = anchor::anchor_payload(golden::kBlockhash);
  const auto gs = anchor::sign_and_encode(g, gkey);
  const bool golden_ok = to_hex(gs.raw()) == golden::kRaw && gs.hash().hex() == golden::kTxHash;
  std::ostringstream d;
  d << "recovery matches " << recovered << "/1000, v in {27,28} " << v_ok << "/1000, golden raw transaction "
    << (golden_ok ? "byte-identical" : "differs");
  return {recovered == 1000 && v_ok == 1000 && golden_ok, d.str()};
}

Result refusal_paths() {
  struct Case {
    std::string name;
    ErrorCode expected;
  };
  std::vector<std::string> notes;
  bool all = true;
  for (const auto& [name, expected] : std::vector<Case>{{"zero balance", ErrorCode::kInsufficientFunds},
                                                        {"unreachable backend", ErrorCode::kConnection},
                                                        {"rejected raw bytes", ErrorCode::kRejected}}) {
    fixture::Chain chain;
    for (int i = 0; i < 20; ++i) chain.mine({});
    auto mock = std::make_shared<anchor::MockPublicChain>();
    const auto wallet = seeded_key("wallet");
    mock->set_balance(wallet.address(), anchor::Wei(1'000'000'000'000'000'000ULL));
    std::shared_ptr<anchor::PublicChainBackend> backend = mock;
    if (name == "zero balance") mock->set_balance(wallet.address(), 0);
    if (name == "unreachable backend") mock->set_reachable(false);
    if (name == "rejected raw bytes") backend = std::make_shared<fixture::CorruptingBackend>(mock);
    auto log = std::make_shared<anchor::AnchorLog>(fixture::scratch_dir("acc-refusal") / "anchors.jsonl");
    std::int64_t now = 1523045907000;
    anchor::AnchorService svc([&chain] { return std::make_shared<const ChainState>(chain.state); }, backend, wallet,
                              log, {}, [&now] { return now += 1000; });
    std::optional<ErrorCode> got;
    try {
      svc.submit_anchor();
    } catch (const Error& e) {
      got = e.code();
    }
    mock->set_reachable(true);
    const auto audits = log->audits();
    const bool ok = got == expected && log->size() == 0 && audits.size() == 1 &&
                    audits[0].code == to_string(expected) && mock->pending_count() == 0;
    all = all && ok;
    notes.push_back(name + " -> " + (got ? std::string(to_string(*got)) : "no error") + ", records " +
                    std::to_string(log->size()) + ", audits " + std::to_string(audits.size()));
  }
  std::string d;
  for (const auto& n : notes) d += (d.empty() ? "" : "; ") + n;
  return {all, d};
}

Result permission_enforcement() {
  Cluster c({"master", "alice", "carol"});
  c.grant("alice", kClient);
  c.grant("carol", {Permission::kConnect, Permission::kReceive});
  c.master().connect_peers();
  c.sync_all();
  c.connect_all();
  std::vector<std::string> breaches;
  auto on_chain = [&](int i) {
    for (const auto& id : c.ids) {
      if (query_asset(*c[id].snapshot(), fixture::md5_of(i))) return true;
    }
    return false;
  };

  // API path.
  api::ApiConfig cfg;
  cfg.allowlist = api::Allowlist({"127.0.0.1"});
  api::AssetApi carol_api(c["carol"], nullptr, cfg);
  if (carol_api.submit_asset(api::to_ingest_json(fixture::asset(7)).dump(), "127.0.0.1").status != 403)
    breaches.push_back("api accepted");
  try {
    c["carol"].submit_asset(fixture::asset(7));
    breaches.push_back("node accepted");
  } catch (const Error&) {
  }
  // Direct broadcast.
  const auto tx = sign_transaction("carol", 1, fixture::asset(7), seeded_key("carol"));
  const auto env = WireMessage::make(MessageKind::kTxBroadcast, "carol", tx.serialize(), seeded_key("carol"));
  for (const auto& id : {"master", "alice"}) {
    c.net->deliver(fixture::mem_address("carol"), fixture::mem_address(id), env.serialize());
    if (c[id].pending().contains(tx.id())) breaches.push_back(std::string("broadcast reached ") + id);
  }
  // Sync and block broadcast.
  const auto tip = c.master().snapshot();
  const Block forged = mine_block({tx}, tip->tip().header, c.params, "master", tip->tip().header.timestamp + 1);
  c.net->unbind(fixture::mem_address("carol"));
  c.net->bind(fixture::mem_address("carol"), fixture::serve_blocks("carol", {forged}));
  PeerSession rogue{"carol", fixture::mem_address("carol"), {Permission::kConnect, Permission::kReceive},
                    SessionState::kActive, {}};
  if (!c["alice"].sync_with_peer(rogue).applied.empty()) breaches.push_back("sync applied");
  const auto benv = WireMessage::make(MessageKind::kBlockBroadcast, "carol", forged.serialize(), seeded_key("carol"));
  c.net->deliver(fixture::mem_address("carol"), fixture::mem_address("master"), benv.serialize());
  c.master().mine();
  if (on_chain(7)) breaches.push_back("asset reached a chain");

  // Revocation: the block that carries it is the last one alice can write to.
  c["alice"].submit_asset(fixture::asset(1));
  c.master().mine();
  const bool before_ok = on_chain(1);
  c.master().submit_permission({"alice", std::nullopt, {Permission::kSend}, false});
  c["alice"].submit_asset(fixture::asset(2));
  const auto revoking = c.master().mine();
  c.master().mine();
  bool refused_after = false;
  try {
    c["alice"].submit_asset(fixture::asset(3));
  } catch (const Error& e) {
    refused_after = e.code() == ErrorCode::kPermissionDenied;
  }
  const bool revoke_ok = before_ok && !on_chain(2) && refused_after && revoking.txs.size() == 1;
  if (!revoke_ok) breaches.push_back("revocation not effective within one block");

  std::string d = breaches.empty() ? "no-send node blocked via api, direct broadcast, sync and block broadcast; "
                                     "revocation effective at the next block"
                                   : "";
  for (const auto& b : breaches) d += (d.empty() ? "" : "; ") + b;
  return {breaches.empty(), d};
}

Bytes slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Bytes(s.begin(), s.end());
}

Result replication() {
  const auto dir = fixture::scratch_dir("acc-replication");
  Cluster c({"master", "alice", "late"}, dir);
  c.stop("late");
  c.grant("alice", kClient);
  c.grant("late", kClient);
  c.connect_all();
  c.sync_all();
  int next = 1;
  while (c.master().snapshot()->height() < 52) {
    submit_round_robin(c, {"master", "alice"}, next, 2);
    next += 2;
    c.master().mine();
  }
  Node& late = c.start("late");
  late.connect_peers();
  late.sync_all();
  const auto tip = c.master().snapshot()->tip_hash();
  bool same_tip = true;
  for (const auto& id : c.ids) same_tip = same_tip && c[id].snapshot()->tip_hash() == tip;
  bool same_bytes = true;
  const auto ref_log = slurp(dir / "master" / "blocks.log");
  const auto ref_idx = slurp(dir / "master" / "blocks.idx");
  for (const auto& id : {"alice", "late"}) {
    same_bytes = same_bytes && slurp(dir / id / "blocks.log") == ref_log && slurp(dir / id / "blocks.idx") == ref_idx;
  }
  std::ostringstream d;
  d << "late node synced to height " << late.snapshot()->height() << ", tips " << (same_tip ? "identical" : "differ")
    << ", block logs " << (same_bytes ? "byte-identical" : "differ") << " (" << ref_log.size() << " bytes)";
  return {same_tip && same_bytes && late.snapshot()->height() == 52, d.str()};
}

Result wire_format() {
  fixture::ApiStack s("acc-wire");
  api::HttpServer server(*s.api, "127.0.0.1", 0);
  ledger::AssetRecord a;
  a.md5_index = "b5a5dfa95146b28cd79e791fcd4eaace";
  a.sha256 = oracle::sha256_hex("fixture asset");
  a.processed_ts_ms = 1519316242073LL;
  a.source_uri = "network.provchain/nifi/getfile/mnt/data";
  if (s.api->submit_asset(api::to_ingest_json(a).dump(), "127.0.0.1").status != 201) return {false, "submit failed"};
  s.master().mine();
  s.deepen();
  s.anchors->submit_anchor();
  s.mock->step();

  httplib::Client cli("127.0.0.1", server.port());
  auto res = cli.Get("/assets/" + a.md5_index);
  if (!res || res->status != 200) return {false, "lookup failed"};
  const auto body = json::parse(res->body);
  const std::set<std::string> published = {"asset",   "confirmations",  "ethStatus", "ethTxId", "issueTxId",
                                           "issued",  "multiChainHash", "sha256",    "source",  "validated"};
  std::set<std::string> keys;
  for (const auto& [k, _] : body.items()) keys.insert(k);
  const std::regex rfc1123(R"(^(Mon|Tue|Wed|Thu|Fri|Sat|Sun), \d{2} (Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec) \d{4} \d{2}:\d{2}:\d{2} GMT$)");
  auto good_time = [&](const char* k) {
    if (!body[k].is_string()) return false;
    const auto text = body[k].get<std::string>();
    const auto parsed = parse_rfc1123(text);
    return std::regex_match(text, rfc1123) && parsed && format_rfc1123(*parsed) == text;
  };
  const bool conf_ok = body["confirmations"].is_string() &&
                       std::regex_match(body["confirmations"].get<std::string>(), std::regex("^[0-9]+$"));
  const bool ok = keys == published && conf_ok && good_time("issued") && good_time("validated");
  std::ostringstream d;
  d << keys.size() << " keys" << (keys == published ? " (exactly the published set)" : " (set differs)")
    << ", confirmations " << body["confirmations"].dump() << ", issued \"" << body["issued"].get<std::string>()
    << "\", validated \"" << body["validated"].get<std::string>() << "\"";
  return {ok, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Result (*)()>> criteria = {
      {"tamper-detection", tamper_detection},
      {"rollback-detection", rollback_detection},
      {"end-to-end-round-trip", end_to_end},
      {"signature-soundness", signature_soundness},
      {"refusal-paths", refusal_paths},
      {"permission-enforcement", permission_enforcement},
      {"replication-convergence", replication},
      {"wire-format-fidelity", wire_format},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failed += !r.pass;
    std::cout << (r.pass ? "PASS " : "FAIL ") << name << ": " << r.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
