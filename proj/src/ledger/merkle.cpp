#include "provchain/ledger/merkle.hpp"

#include "provchain/crypto/hash.hpp"

namespace provchain::ledger {
namespace {

Hash32 tagged(std::uint8_t tag, const Hash32& a, const Hash32* b) {
  Bytes buf;
  buf.reserve(65);
  buf.push_back(tag);
  buf.insert(buf.end(), a.bytes.begin(), a.bytes.end());
  if (b) buf.insert(buf.end(), b->bytes.begin(), b->bytes.end());
  return crypto::sha256(buf);
}

Hash32 subtree(std::span<const Hash32> leaves) {
  if (leaves.size() == 1) return tagged(0x00, leaves[0], nullptr);
  std::size_t split = 1;
  while (split * 2 < leaves.size()) split *= 2;
  const Hash32 left = subtree(leaves.first(split));
  const Hash32 right = subtree(leaves.subspan(split));
  return tagged(0x01, left, &right);
}

}  // namespace

Hash32 merkle_root(std::span<const Hash32> leaves) {
  if (leaves.empty()) return crypto::sha256({});
  return subtree(leaves);
}

}  // namespace provchain::ledger
