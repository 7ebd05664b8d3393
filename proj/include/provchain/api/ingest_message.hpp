#pragma once

#include <string>

#include <json.hpp>

#include "provchain/ledger/types.hpp"

namespace provchain::api {

// The submission body: "hash.md5", "hash.sha256", "processed.ts",
// "source.uri", optional "parent.md5", and any further flat scalar keys as
// metadata.
nlohmann::json to_ingest_json(const ledger::AssetRecord& asset);

// Throws Error(kValidation) naming the offending field.
ledger::AssetRecord parse_ingest_message(const nlohmann::json& body);
ledger::AssetRecord parse_ingest_message(const std::string& body);

}  // namespace provchain::api
