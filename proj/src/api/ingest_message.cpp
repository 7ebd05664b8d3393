#include "provchain/api/ingest_message.hpp"

#include "provchain/common/error.hpp"

namespace provchain::api {

using nlohmann::json;

namespace {

constexpr const char* kMd5 = "hash.md5";
constexpr const char* kSha256 = "hash.sha256";
constexpr const char* kTs = "processed.ts";
constexpr const char* kSource = "source.uri";
constexpr const char* kParent = "parent.md5";

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::kValidation, msg); }

std::string required_string(const json& body, const char* key) {
  if (!body.contains(key)) invalid(std::string(key) + " is required");
  if (!body[key].is_string()) invalid(std::string(key) + " must be a string");
  return body[key].get<std::string>();
}

}  // namespace

json to_ingest_json(const ledger::AssetRecord& a) {
  json j = json::object();
  for (const auto& [k, v] : a.metadata) j[k] = v;
  j[kMd5] = a.md5_index;
  j[kSha256] = a.sha256;
  j[kTs] = a.processed_ts_ms;
  j[kSource] = a.source_uri;
  if (a.parent_md5) j[kParent] = *a.parent_md5;
  return j;
}

ledger::AssetRecord parse_ingest_message(const json& body) {
  if (!body.is_object()) invalid("body must be a JSON object");
  ledger::AssetRecord a;
  a.md5_index = required_string(body, kMd5);
  a.sha256 = required_string(body, kSha256);
  if (!body.contains(kTs)) invalid(std::string(kTs) + " is required");
  const auto& ts = body[kTs];
  if (!ts.is_number_integer()) invalid(std::string(kTs) + " must be an integer (epoch milliseconds)");
  if (ts.is_number_unsigned() && ts.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
    invalid(std::string(kTs) + " out of range");
  }
  a.processed_ts_ms = ts.get<std::int64_t>();
  a.source_uri = required_string(body, kSource);
  if (body.contains(kParent) && !body[kParent].is_null()) a.parent_md5 = required_string(body, kParent);

  for (const auto& [key, value] : body.items()) {
    if (key == kMd5 || key == kSha256 || key == kTs || key == kSource || key == kParent) continue;
    if (value.is_string()) {
      a.metadata[key] = value.get<std::string>();
    } else if (value.is_number() || value.is_boolean()) {
      a.metadata[key] = value.dump();
    } else {
      invalid(key + " must be a string, number or boolean");
    }
  }
  ledger::validate_asset_fields(a);
  return a;
}

ledger::AssetRecord parse_ingest_message(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    invalid("body is not valid JSON");
  }
  return parse_ingest_message(j);
}

}  // namespace provchain::api
