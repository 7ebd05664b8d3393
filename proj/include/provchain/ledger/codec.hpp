#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "provchain/common/bytes.hpp"

namespace provchain::ledger {

// Canonical byte encoding shared by hashing, persistence and the wire:
// big-endian fixed-width integers, u32 length prefix before every byte string.
class Writer {
 public:
  Writer& u8(std::uint8_t v);
  Writer& u32(std::uint32_t v);
  Writer& u64(std::uint64_t v);
  Writer& bytes(ByteView v);
  Writer& str(std::string_view v) { return bytes(as_bytes(v)); }

  const Bytes& data() const& { return out_; }
  Bytes take() && { return std::move(out_); }

 private:
  Bytes out_;
};

// Strict reader: every accessor throws Error(kDecode) on truncation, and
// finish() rejects trailing bytes, so decode(encode(x)) is the only accepted form.
class Reader {
 public:
  explicit Reader(ByteView data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  Bytes bytes(std::size_t max_len = kMaxField);
  std::string str(std::size_t max_len = kMaxField);
  Hash32 hash32();
  bool boolean();

  std::size_t remaining() const { return data_.size() - pos_; }
  void finish() const;

  static constexpr std::size_t kMaxField = 64u << 20;

 private:
  ByteView take(std::size_t n);

  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace provchain::ledger
