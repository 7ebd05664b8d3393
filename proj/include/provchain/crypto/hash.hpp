#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "provchain/common/bytes.hpp"

namespace provchain::crypto {

Hash32 sha256(ByteView data);
// SHA-256 applied twice; used for block hashes and ledger transaction ids.
Hash32 sha256d(ByteView data);
std::array<std::uint8_t, 16> md5(ByteView data);
Hash32 hmac_sha256(ByteView key, ByteView data);

// Computes MD5 and SHA-256 over the same byte stream in one pass.
class DualHasher {
 public:
  DualHasher();
  ~DualHasher();
  DualHasher(DualHasher&&) noexcept;
  DualHasher& operator=(DualHasher&&) noexcept;

  void update(ByteView chunk);

  struct Digests {
    std::string md5_hex;
    std::string sha256_hex;
    std::uint64_t byte_count = 0;
  };
  // Finalizes; the hasher must not be updated afterwards.
  Digests finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace provchain::crypto
