#pragma once

#include "provchain/common/bytes.hpp"

namespace provchain::crypto {

// Original Keccak-256 (0x01 domain padding) as used by Ethereum, not FIPS-202 SHA3-256.
Hash32 keccak256(ByteView data);

}  // namespace provchain::crypto
