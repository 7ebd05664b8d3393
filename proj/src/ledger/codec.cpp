#include "provchain/ledger/codec.hpp"

#include "provchain/common/error.hpp"

namespace provchain::ledger {

Writer& Writer::u8(std::uint8_t v) {
  out_.push_back(v);
  return *this;
}

Writer& Writer::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

Writer& Writer::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

Writer& Writer::bytes(ByteView v) {
  u32(static_cast<std::uint32_t>(v.size()));
  out_.insert(out_.end(), v.begin(), v.end());
  return *this;
}

ByteView Reader::take(std::size_t n) {
  if (remaining() < n) throw Error(ErrorCode::kDecode, "truncated input");
  ByteView out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t Reader::u8() { return take(1)[0]; }

std::uint32_t Reader::u32() {
  std::uint32_t v = 0;
  for (std::uint8_t b : take(4)) v = (v << 8) | b;
  return v;
}

std::uint64_t Reader::u64() {
  std::uint64_t v = 0;
  for (std::uint8_t b : take(8)) v = (v << 8) | b;
  return v;
}

Bytes Reader::bytes(std::size_t max_len) {
  const std::uint32_t len = u32();
  if (len > max_len) throw Error(ErrorCode::kDecode, "field exceeds maximum length");
  const ByteView v = take(len);
  return Bytes(v.begin(), v.end());
}

std::string Reader::str(std::size_t max_len) {
  const Bytes b = bytes(max_len);
  return std::string(b.begin(), b.end());
}

Hash32 Reader::hash32() {
  const Bytes b = bytes(32);
  if (b.size() != 32) throw Error(ErrorCode::kDecode, "expected 32-byte hash");
  Hash32 h;
  std::copy(b.begin(), b.end(), h.bytes.begin());
  return h;
}

bool Reader::boolean() {
  const std::uint8_t v = u8();
  if (v > 1) throw Error(ErrorCode::kDecode, "boolean must be 0 or 1");
  return v == 1;
}

void Reader::finish() const {
  if (remaining() != 0) throw Error(ErrorCode::kDecode, "trailing bytes");
}

}  // namespace provchain::ledger
