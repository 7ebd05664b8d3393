#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "provchain/common/bytes.hpp"
#include "provchain/ledger/types.hpp"

namespace provchain::network {

enum class MessageKind : std::uint8_t {
  kHello = 1,
  kHelloAck = 2,
  kTxBroadcast = 3,
  kBlockBroadcast = 4,
  kGetBlocks = 5,
  kBlocksReply = 6,
};

std::string_view to_string(MessageKind kind);

// Signed envelope. The signature covers kind, sender and body in the ledger's
// canonical encoding.
struct WireMessage {
  MessageKind kind = MessageKind::kHello;
  ledger::NodeId sender;
  Bytes body;
  crypto::RecoverableSignature signature;

  static WireMessage make(MessageKind kind, const ledger::NodeId& sender, Bytes body,
                          const crypto::PrivateKey& key);

  Hash32 signing_hash() const;
  bool signed_by(const crypto::Address& address) const;

  Bytes serialize() const;
  static WireMessage deserialize(ByteView data);
};

// Stream framing: 4-byte big-endian length followed by the envelope bytes.
Bytes frame(ByteView envelope);
constexpr std::size_t kMaxFrame = 256u << 20;

}  // namespace provchain::network
