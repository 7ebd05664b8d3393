#include "provchain/verify/verify.hpp"

#include <httplib.h>

#include <sstream>

#include "provchain/common/error.hpp"
#include "provchain/common/url.hpp"

namespace provchain::verify {

using nlohmann::json;

namespace {

Outcome failure(Verdict v, std::string status, std::string message) {
  Outcome o;
  o.verdict = v;
  o.status = std::move(status);
  o.message = std::move(message);
  return o;
}

}  // namespace

Outcome classify(const ingest::FileHashes& local, int http_status, const std::string& body) {
  Outcome o;
  o.local = local;
  try {
    o.document = json::parse(body);
  } catch (const json::exception&) {
    o.document = nullptr;
  }
  if (http_status == 404) {
    o.verdict = Verdict::kNotFound;
    o.status = "NotFound";
    o.message = "no asset with md5 " + local.md5_hex;
    return o;
  }
  if (http_status != 200 || !o.document.is_object()) {
    o.verdict = Verdict::kError;
    o.status = "Error";
    o.message = "unexpected response: HTTP " + std::to_string(http_status);
    return o;
  }
  const auto sha = o.document.value("sha256", std::string());
  if (sha != local.sha256_hex) {
    o.verdict = Verdict::kMismatch;
    o.status = "Sha256Mismatch";
    o.message = "server sha256 " + (sha.empty() ? std::string("(missing)") : sha) + " != local " + local.sha256_hex;
    return o;
  }
  const auto eth = o.document.value("ethStatus", std::string());
  if (eth == "Confirmed") {
    o.verdict = Verdict::kVerified;
    o.status = "Confirmed";
  } else if (eth == "Pending" || eth == "NotAnchored") {
    o.verdict = Verdict::kUnanchored;
    o.status = eth;
  } else {
    o.verdict = Verdict::kError;
    o.status = "Error";
    o.message = "unknown ethStatus '" + eth + "'";
  }
  return o;
}

Outcome verify_file(const std::filesystem::path& path, const std::string& api_url,
                    std::chrono::milliseconds timeout) {
  ingest::FileHashes local;
  try {
    local = ingest::hash_file(path);
  } catch (const Error& e) {
    return failure(Verdict::kError, "Error", e.what());
  }
  HttpUrl url;
  try {
    url = split_http_url(api_url);
  } catch (const Error& e) {
    auto o = failure(Verdict::kError, "Error", e.what());
    o.local = local;
    return o;
  }
  httplib::Client client(url.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  auto res = client.Get(url.path + "/assets/" + local.md5_hex);
  if (!res) {
    auto o = failure(Verdict::kError, "Error", "request failed: " + httplib::to_string(res.error()));
    o.local = local;
    return o;
  }
  return classify(local, res->status, res->body);
}

std::string render(const Outcome& o, bool quiet) {
  std::ostringstream out;
  if (!quiet) {
    if (o.local) {
      out << "file md5:    " << o.local->md5_hex << "\n"
          << "file sha256: " << o.local->sha256_hex << "\n";
    }
    if (!o.document.is_null()) out << o.document.dump(2) << "\n";
    if (!o.message.empty()) out << o.message << "\n";
  }
  out << "VERDICT: " << o.status << "\n";
  return out.str();
}

}  // namespace provchain::verify
