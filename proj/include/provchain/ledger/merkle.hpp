#pragma once

#include <span>

#include "provchain/common/bytes.hpp"

namespace provchain::ledger {

// RFC 6962-style tree over transaction ids: leaves are SHA-256(0x00 || id),
// interior nodes SHA-256(0x01 || left || right), split at the largest power of
// two below the count. The empty list hashes to SHA-256 of the empty string.
Hash32 merkle_root(std::span<const Hash32> leaves);

}  // namespace provchain::ledger
