#pragma once

#include <filesystem>

#include "provchain/crypto/hash.hpp"

namespace provchain::ingest {

using FileHashes = crypto::DualHasher::Digests;

inline constexpr std::size_t kHashChunk = 64 * 1024;

// Streams the file once through md5 and SHA-256. Throws Error(kIo).
FileHashes hash_file(const std::filesystem::path& path);

}  // namespace provchain::ingest
