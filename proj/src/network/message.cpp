#include "provchain/network/message.hpp"

#include "provchain/common/error.hpp"
#include "provchain/crypto/hash.hpp"
#include "provchain/ledger/codec.hpp"

namespace provchain::network {

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::kHello: return "hello";
    case MessageKind::kHelloAck: return "hello_ack";
    case MessageKind::kTxBroadcast: return "tx_broadcast";
    case MessageKind::kBlockBroadcast: return "block_broadcast";
    case MessageKind::kGetBlocks: return "get_blocks";
    case MessageKind::kBlocksReply: return "blocks_reply";
  }
  return "unknown";
}

WireMessage WireMessage::make(MessageKind kind, const ledger::NodeId& sender, Bytes body,
                              const crypto::PrivateKey& key) {
  WireMessage m{kind, sender, std::move(body), {}};
  m.signature = crypto::sign(m.signing_hash(), key);
  return m;
}

Hash32 WireMessage::signing_hash() const {
  ledger::Writer w;
  w.u8(static_cast<std::uint8_t>(kind)).str(sender).bytes(body);
  return crypto::sha256d(w.data());
}

bool WireMessage::signed_by(const crypto::Address& address) const {
  try {
    return crypto::recover_address(signing_hash(), signature) == address;
  } catch (const Error&) {
    return false;
  }
}

Bytes WireMessage::serialize() const {
  ledger::Writer w;
  w.u8(static_cast<std::uint8_t>(kind)).str(sender).bytes(body).bytes(signature.to_compact());
  return std::move(w).take();
}

WireMessage WireMessage::deserialize(ByteView data) {
  ledger::Reader r(data);
  WireMessage m;
  const std::uint8_t kind = r.u8();
  if (kind < 1 || kind > 6) throw Error(ErrorCode::kDecode, "unknown message kind");
  m.kind = static_cast<MessageKind>(kind);
  m.sender = r.str(4096);
  m.body = r.bytes(kMaxFrame);
  m.signature = crypto::RecoverableSignature::from_compact(r.bytes(65));
  r.finish();
  return m;
}

Bytes frame(ByteView envelope) {
  ledger::Writer w;
  w.bytes(envelope);
  return std::move(w).take();
}

}  // namespace provchain::network
