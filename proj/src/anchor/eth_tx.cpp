#include "provchain/anchor/eth_tx.hpp"

#include <algorithm>
#include <cctype>

#include "provchain/common/error.hpp"
#include "provchain/crypto/keccak.hpp"

namespace provchain::anchor {

namespace {

std::vector<Bytes> unsigned_fields(const EthTransaction& tx) {
  return {rlp::encode_uint(tx.nonce),     rlp::encode_uint(tx.gas_price), rlp::encode_uint(tx.gas_limit),
          rlp::encode_bytes(tx.to.view()), rlp::encode_uint(tx.value),     rlp::encode_bytes(tx.data)};
}

Bytes scalar_bytes(const Hash32& h) {
  auto it = std::find_if(h.bytes.begin(), h.bytes.end(), [](std::uint8_t b) { return b != 0; });
  return Bytes(it, h.bytes.end());
}

Hash32 scalar_from(const rlp::Item& item) {
  const Bytes& b = item.bytes();
  if (b.size() > 32) throw Error(ErrorCode::kDecode, "signature scalar exceeds 32 bytes");
  if (!b.empty() && b[0] == 0) throw Error(ErrorCode::kDecode, "signature scalar has leading zero");
  Hash32 h;
  std::copy(b.begin(), b.end(), h.bytes.end() - static_cast<std::ptrdiff_t>(b.size()));
  return h;
}

}  // namespace

Hash32 signing_hash(const EthTransaction& tx, std::optional<std::uint64_t> chain_id) {
  auto fields = unsigned_fields(tx);
  if (chain_id) {
    fields.push_back(rlp::encode_uint(*chain_id));
    fields.push_back(rlp::encode_uint(std::uint64_t{0}));
    fields.push_back(rlp::encode_uint(std::uint64_t{0}));
  }
  return crypto::keccak256(rlp::encode_list(fields));
}

Bytes SignedEthTransaction::raw() const {
  auto fields = unsigned_fields(tx);
  fields.push_back(rlp::encode_uint(v));
  fields.push_back(rlp::encode_bytes(scalar_bytes(r)));
  fields.push_back(rlp::encode_bytes(scalar_bytes(s)));
  return rlp::encode_list(fields);
}

Hash32 SignedEthTransaction::hash() const { return crypto::keccak256(raw()); }

std::optional<std::uint64_t> SignedEthTransaction::chain_id() const {
  if (v == 27 || v == 28) return std::nullopt;
  return (v - 35) / 2;
}

crypto::Address SignedEthTransaction::sender() const {
  const auto id = chain_id();
  const std::uint64_t parity = id ? v - 35 - 2 * *id : v - 27;
  crypto::RecoverableSignature sig{r, s, static_cast<std::uint8_t>(parity)};
  return crypto::recover_address(signing_hash(tx, id), sig);
}

SignedEthTransaction SignedEthTransaction::decode(ByteView raw) {
  const rlp::Item root = rlp::decode(raw);
  const auto& f = root.list();
  if (f.size() != 9) throw Error(ErrorCode::kDecode, "transaction must have 9 fields");
  SignedEthTransaction out;
  out.tx.nonce = rlp::to_u64(f[0]);
  out.tx.gas_price = rlp::to_wei(f[1]);
  out.tx.gas_limit = rlp::to_u64(f[2]);
  const Bytes& to = f[3].bytes();
  if (to.size() != 20) throw Error(ErrorCode::kDecode, "recipient must be 20 bytes");
  std::copy(to.begin(), to.end(), out.tx.to.bytes.begin());
  out.tx.value = rlp::to_wei(f[4]);
  out.tx.data = f[5].bytes();
  out.v = rlp::to_u64(f[6]);
  if (out.v != 27 && out.v != 28 && out.v < 37) throw Error(ErrorCode::kDecode, "invalid v");
  out.r = scalar_from(f[7]);
  out.s = scalar_from(f[8]);
  return out;
}

SignedEthTransaction sign_and_encode(const EthTransaction& tx, const crypto::PrivateKey& key,
                                     std::optional<std::uint64_t> chain_id) {
  const auto sig = crypto::sign(signing_hash(tx, chain_id), key);
  SignedEthTransaction out;
  out.tx = tx;
  out.v = chain_id ? *chain_id * 2 + 35 + sig.recovery_id : 27u + sig.recovery_id;
  out.r = sig.r;
  out.s = sig.s;
  return out;
}

std::uint64_t intrinsic_gas(ByteView data) {
  std::uint64_t gas = 21000;
  for (auto b : data) gas += b ? 68 : 4;
  return gas;
}

std::uint64_t with_safety_margin(std::uint64_t gas) { return gas + gas / 5; }

Bytes anchor_payload(std::string_view blockhash_hex) {
  if (blockhash_hex.size() != 64) throw Error(ErrorCode::kValidation, "blockhash must be 64 hex characters");
  std::string lower(blockhash_hex);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (!is_lower_hex(lower, 64)) throw Error(ErrorCode::kValidation, "blockhash must be 64 hex characters");
  return to_bytes(lower);
}

std::optional<std::string> decode_anchor_payload(ByteView data) {
  std::string text(data.begin(), data.end());
  if (!is_lower_hex(text, 64)) return std::nullopt;
  return text;
}

std::string to_string(const Wei& v) { return v.str(); }

std::string to_quantity_hex(const Wei& v) {
  if (v == 0) return "0x0";
  std::string hex = to_hex(rlp::wei_bytes(v));
  const auto first = hex.find_first_not_of('0');
  return "0x" + hex.substr(first);
}

Wei parse_wei(std::string_view text) {
  auto fail = [&] { return Error(ErrorCode::kValidation, "not an unsigned integer: " + std::string(text)); };
  if (text.empty()) throw fail();
  const bool hex = text.starts_with("0x") || text.starts_with("0X");
  std::string_view digits = hex ? text.substr(2) : text;
  if (digits.empty() || digits.size() > 78) throw fail();
  Wei v = 0;
  for (char c : digits) {
    unsigned d;
    if (c >= '0' && c <= '9') {
      d = static_cast<unsigned>(c - '0');
    } else if (hex && c >= 'a' && c <= 'f') {
      d = static_cast<unsigned>(c - 'a' + 10);
    } else if (hex && c >= 'A' && c <= 'F') {
      d = static_cast<unsigned>(c - 'A' + 10);
    } else {
      throw fail();
    }
    boost::multiprecision::uint512_t next = boost::multiprecision::uint512_t(v) * (hex ? 16 : 10) + d;
    if (next > boost::multiprecision::uint512_t(std::numeric_limits<Wei>::max())) throw fail();
    v = static_cast<Wei>(next);
  }
  return v;
}

}  // namespace provchain::anchor
