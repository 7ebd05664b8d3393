#pragma once

#include <chrono>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "provchain/ingest/hasher.hpp"

namespace provchain::verify {

// Doubles as the process exit code.
enum class Verdict : int {
  kVerified = 0,
  kUnanchored = 1,  // found, NotAnchored or Pending
  kNotFound = 2,
  kMismatch = 3,  // server sha256 differs from the local file
  kError = 4,
};

struct Outcome {
  Verdict verdict = Verdict::kError;
  std::string status;  // the VERDICT token
  std::optional<ingest::FileHashes> local;
  nlohmann::json document;  // the server's response, when there was one
  std::string message;
};

// Hashes `path` locally and checks it against GET <api_url>/assets/{md5}.
Outcome verify_file(const std::filesystem::path& path, const std::string& api_url,
                    std::chrono::milliseconds timeout = std::chrono::seconds(10));

// Classifies an already fetched response; exposed for tests.
Outcome classify(const ingest::FileHashes& local, int http_status, const std::string& body);

// Pretty document (unless quiet) and "VERDICT: <status>" as the last line.
std::string render(const Outcome& outcome, bool quiet);

}  // namespace provchain::verify
