#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "provchain/common/bytes.hpp"

namespace provchain::anchor {

using Wei = boost::multiprecision::uint256_t;

namespace rlp {

// A decoded RLP value: a byte string or a list of items.
struct Item {
  std::variant<Bytes, std::vector<Item>> value;

  bool is_list() const { return value.index() == 1; }
  const Bytes& bytes() const;
  const std::vector<Item>& list() const;
};

Bytes encode_bytes(ByteView data);
// `items` are already-encoded elements.
Bytes encode_list(const std::vector<Bytes>& items);
Bytes encode_uint(std::uint64_t v);
Bytes encode_uint(const Wei& v);

// Strict decoding: rejects non-canonical lengths, single bytes below 0x80
// wrapped in a prefix, and trailing data. Throws Error(kDecode).
Item decode(ByteView data);

// Big-endian scalar with no leading zeros; Error(kDecode) otherwise.
std::uint64_t to_u64(const Item& item);
Wei to_wei(const Item& item);

// Minimal big-endian bytes of a scalar (empty for zero).
Bytes wei_bytes(const Wei& v);

}  // namespace rlp
}  // namespace provchain::anchor
