#include "provchain/anchor/rlp.hpp"

#include "provchain/common/error.hpp"

namespace provchain::anchor::rlp {

namespace {

[[noreturn]] void bad(const char* what) { throw Error(ErrorCode::kDecode, std::string("rlp: ") + what); }

Bytes be_length(std::size_t n) {
  Bytes out;
  while (n > 0) {
    out.insert(out.begin(), static_cast<std::uint8_t>(n & 0xff));
    n >>= 8;
  }
  return out;
}

Bytes with_prefix(std::uint8_t short_base, std::uint8_t long_base, ByteView payload) {
  Bytes out;
  if (payload.size() <= 55) {
    out.push_back(static_cast<std::uint8_t>(short_base + payload.size()));
  } else {
    Bytes len = be_length(payload.size());
    out.push_back(static_cast<std::uint8_t>(long_base + len.size()));
    out.insert(out.end(), len.begin(), len.end());
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct Cursor {
  ByteView data;
  std::size_t pos = 0;

  std::size_t long_length(std::size_t len_of_len) {
    if (len_of_len > 8 || pos + len_of_len > data.size()) bad("truncated length");
    if (data[pos] == 0) bad("length has leading zero");
    std::size_t n = 0;
    for (std::size_t i = 0; i < len_of_len; ++i) n = (n << 8) | data[pos++];
    if (n <= 55) bad("long form used for short payload");
    return n;
  }

  Item next(int depth) {
    if (depth > 64) bad("nesting too deep");
    if (pos >= data.size()) bad("truncated item");
    const std::uint8_t p = data[pos++];
    if (p < 0x80) return Item{Bytes{p}};
    if (p <= 0xbf) {
      std::size_t n = p <= 0xb7 ? p - 0x80u : long_length(p - 0xb7u);
      if (n > data.size() - pos) bad("truncated string");
      Bytes b(data.begin() + static_cast<std::ptrdiff_t>(pos),
              data.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
      if (n == 1 && b[0] < 0x80) bad("single byte must not be prefixed");
      return Item{std::move(b)};
    }
    std::size_t n = p <= 0xf7 ? p - 0xc0u : long_length(p - 0xf7u);
    if (n > data.size() - pos) bad("truncated list");
    const std::size_t end = pos + n;
    std::vector<Item> items;
    Cursor inner{data.subspan(0, end), pos};
    while (inner.pos < end) items.push_back(inner.next(depth + 1));
    pos = end;
    return Item{std::move(items)};
  }
};

}  // namespace

const Bytes& Item::bytes() const {
  if (is_list()) bad("expected a string, found a list");
  return std::get<Bytes>(value);
}

const std::vector<Item>& Item::list() const {
  if (!is_list()) bad("expected a list, found a string");
  return std::get<std::vector<Item>>(value);
}

Bytes encode_bytes(ByteView data) {
  if (data.size() == 1 && data[0] < 0x80) return Bytes{data[0]};
  return with_prefix(0x80, 0xb7, data);
}

Bytes encode_list(const std::vector<Bytes>& items) {
  Bytes payload;
  for (const auto& i : items) payload.insert(payload.end(), i.begin(), i.end());
  return with_prefix(0xc0, 0xf7, payload);
}

Bytes wei_bytes(const Wei& v) {
  Bytes out;
  boost::multiprecision::export_bits(v, std::back_inserter(out), 8);
  if (out.size() == 1 && out[0] == 0) out.clear();
  return out;
}

Bytes encode_uint(std::uint64_t v) { return encode_bytes(be_length(v)); }
Bytes encode_uint(const Wei& v) { return encode_bytes(wei_bytes(v)); }

Item decode(ByteView data) {
  Cursor c{data};
  Item item = c.next(0);
  if (c.pos != data.size()) bad("trailing bytes");
  return item;
}

std::uint64_t to_u64(const Item& item) {
  const Bytes& b = item.bytes();
  if (b.size() > 8) bad("integer exceeds 64 bits");
  if (!b.empty() && b[0] == 0) bad("integer has leading zero");
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

Wei to_wei(const Item& item) {
  const Bytes& b = item.bytes();
  if (b.size() > 32) bad("integer exceeds 256 bits");
  if (!b.empty() && b[0] == 0) bad("integer has leading zero");
  Wei v = 0;
  if (!b.empty()) boost::multiprecision::import_bits(v, b.begin(), b.end(), 8);
  return v;
}

}  // namespace provchain::anchor::rlp
