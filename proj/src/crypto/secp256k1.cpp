#include "provchain/crypto/secp256k1.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/obj_mac.h>
#include <openssl/rand.h>

#include <algorithm>
#include <memory>

#include "provchain/common/error.hpp"
#include "provchain/crypto/hash.hpp"
#include "provchain/crypto/keccak.hpp"

namespace provchain::crypto {
namespace {

struct BnDeleter {
  void operator()(BIGNUM* bn) const { BN_clear_free(bn); }
};
struct CtxDeleter {
  void operator()(BN_CTX* ctx) const { BN_CTX_free(ctx); }
};
struct PointDeleter {
  void operator()(EC_POINT* p) const { EC_POINT_free(p); }
};
struct GroupDeleter {
  void operator()(EC_GROUP* g) const { EC_GROUP_free(g); }
};

using Bn = std::unique_ptr<BIGNUM, BnDeleter>;
using BnCtx = std::unique_ptr<BN_CTX, CtxDeleter>;
using Point = std::unique_ptr<EC_POINT, PointDeleter>;

[[noreturn]] void fail(const char* what) { throw Error(ErrorCode::kKey, what); }

Bn new_bn() {
  Bn bn(BN_new());
  if (!bn) fail("BN_new failed");
  return bn;
}

Bn bn_from(ByteView bytes) {
  Bn bn(BN_bin2bn(bytes.data(), static_cast<int>(bytes.size()), nullptr));
  if (!bn) fail("BN_bin2bn failed");
  return bn;
}

std::array<std::uint8_t, 32> bn_to32(const BIGNUM* bn) {
  std::array<std::uint8_t, 32> out{};
  if (BN_bn2binpad(bn, out.data(), 32) != 32) fail("scalar does not fit in 32 bytes");
  return out;
}

// Curve parameters are immutable after construction and safe to share across threads.
struct Curve {
  std::unique_ptr<EC_GROUP, GroupDeleter> group{EC_GROUP_new_by_curve_name(NID_secp256k1)};
  Bn order = new_bn();
  Bn half_order = new_bn();

  Curve() {
    if (!group) fail("secp256k1 unavailable");
    BnCtx ctx(BN_CTX_new());
    if (EC_GROUP_get_order(group.get(), order.get(), ctx.get()) != 1) fail("no group order");
    if (BN_rshift1(half_order.get(), order.get()) != 1) fail("BN_rshift1 failed");
  }
};

const Curve& curve() {
  static const Curve c;
  return c;
}

BnCtx new_ctx() {
  BnCtx ctx(BN_CTX_new());
  if (!ctx) fail("BN_CTX_new failed");
  return ctx;
}

Point new_point() {
  Point p(EC_POINT_new(curve().group.get()));
  if (!p) fail("EC_POINT_new failed");
  return p;
}

std::array<std::uint8_t, 64> point_xy(const EC_POINT* p, BN_CTX* ctx) {
  Bn x = new_bn();
  Bn y = new_bn();
  if (EC_POINT_get_affine_coordinates(curve().group.get(), p, x.get(), y.get(), ctx) != 1) {
    fail("point at infinity");
  }
  std::array<std::uint8_t, 64> out{};
  const auto xb = bn_to32(x.get());
  const auto yb = bn_to32(y.get());
  std::copy(xb.begin(), xb.end(), out.begin());
  std::copy(yb.begin(), yb.end(), out.begin() + 32);
  return out;
}

Address address_of(const std::array<std::uint8_t, 64>& pub) {
  const Hash32 h = keccak256(pub);
  Address a;
  std::copy(h.bytes.begin() + 12, h.bytes.end(), a.bytes.begin());
  return a;
}

bool in_scalar_range(const BIGNUM* v) {
  return !BN_is_zero(v) && !BN_is_negative(v) && BN_cmp(v, curve().order.get()) < 0;
}

// RFC 6979 section 3.2 with HMAC-SHA256; yields successive candidates until
// the caller accepts one.
class NonceGenerator {
 public:
  NonceGenerator(const std::array<std::uint8_t, 32>& key, const Hash32& digest, BN_CTX* ctx) {
    Bn h = bn_from(digest.view());
    Bn reduced = new_bn();
    if (BN_nnmod(reduced.get(), h.get(), curve().order.get(), ctx) != 1) fail("BN_nnmod failed");
    const auto h_octets = bn_to32(reduced.get());

    v_.fill(0x01);
    k_.fill(0x00);
    for (std::uint8_t tag : {std::uint8_t{0x00}, std::uint8_t{0x01}}) {
      Bytes msg(v_.begin(), v_.end());
      msg.push_back(tag);
      msg.insert(msg.end(), key.begin(), key.end());
      msg.insert(msg.end(), h_octets.begin(), h_octets.end());
      k_ = hmac_sha256(k_, msg).bytes;
      v_ = hmac_sha256(k_, v_).bytes;
    }
  }

  Bn next() {
    if (!first_) {
      Bytes msg(v_.begin(), v_.end());
      msg.push_back(0x00);
      k_ = hmac_sha256(k_, msg).bytes;
      v_ = hmac_sha256(k_, v_).bytes;
    }
    first_ = false;
    v_ = hmac_sha256(k_, v_).bytes;
    return bn_from(v_);
  }

 private:
  std::array<std::uint8_t, 32> v_{};
  std::array<std::uint8_t, 32> k_{};
  bool first_ = true;
};

}  // namespace

Address Address::from_hex(std::string_view hex) {
  const Bytes raw = provchain::from_hex(hex);
  if (raw.size() != 20) throw Error(ErrorCode::kValidation, "address must be 20 bytes");
  Address a;
  std::copy(raw.begin(), raw.end(), a.bytes.begin());
  return a;
}

std::string Address::hex() const { return "0x" + to_hex(bytes); }

PrivateKey::PrivateKey(const std::array<std::uint8_t, 32>& scalar) : scalar_(scalar) {
  Bn v = bn_from(scalar_);
  if (!in_scalar_range(v.get())) fail("private key is not a valid secp256k1 scalar");
}

PrivateKey PrivateKey::from_hex(std::string_view hex) {
  Bytes raw;
  try {
    raw = provchain::from_hex(hex);
  } catch (const Error&) {
    fail("private key is not valid hex");
  }
  if (raw.size() != 32) fail("private key must be 32 bytes");
  std::array<std::uint8_t, 32> s{};
  std::copy(raw.begin(), raw.end(), s.begin());
  return PrivateKey(s);
}

PrivateKey PrivateKey::random() {
  std::array<std::uint8_t, 32> s{};
  for (;;) {
    if (RAND_bytes(s.data(), static_cast<int>(s.size())) != 1) fail("RAND_bytes failed");
    Bn v = bn_from(s);
    if (in_scalar_range(v.get())) return PrivateKey(s);
  }
}

std::array<std::uint8_t, 64> PrivateKey::public_key() const {
  BnCtx ctx = new_ctx();
  Bn d = bn_from(scalar_);
  Point q = new_point();
  if (EC_POINT_mul(curve().group.get(), q.get(), d.get(), nullptr, nullptr, ctx.get()) != 1) {
    fail("EC_POINT_mul failed");
  }
  return point_xy(q.get(), ctx.get());
}

Address PrivateKey::address() const { return address_of(public_key()); }

std::array<std::uint8_t, 65> RecoverableSignature::to_compact() const {
  std::array<std::uint8_t, 65> out{};
  std::copy(r.bytes.begin(), r.bytes.end(), out.begin());
  std::copy(s.bytes.begin(), s.bytes.end(), out.begin() + 32);
  out[64] = recovery_id;
  return out;
}

RecoverableSignature RecoverableSignature::from_compact(ByteView bytes) {
  if (bytes.size() != 65) throw Error(ErrorCode::kDecode, "signature must be 65 bytes");
  RecoverableSignature sig;
  std::copy(bytes.begin(), bytes.begin() + 32, sig.r.bytes.begin());
  std::copy(bytes.begin() + 32, bytes.begin() + 64, sig.s.bytes.begin());
  sig.recovery_id = bytes[64];
  if (sig.recovery_id > 1) throw Error(ErrorCode::kDecode, "recovery id must be 0 or 1");
  return sig;
}

bool is_low_s(const Hash32& s) {
  Bn v = bn_from(s.view());
  return !BN_is_zero(v.get()) && BN_cmp(v.get(), curve().half_order.get()) <= 0;
}

RecoverableSignature sign(const Hash32& digest, const PrivateKey& key) {
  const Curve& c = curve();
  BnCtx ctx = new_ctx();
  Bn d = bn_from(key.scalar());
  Bn z = bn_from(digest.view());
  NonceGenerator nonces(key.scalar(), digest, ctx.get());

  for (;;) {
    Bn k = nonces.next();
    if (!in_scalar_range(k.get())) continue;

    Point big_r = new_point();
    if (EC_POINT_mul(c.group.get(), big_r.get(), k.get(), nullptr, nullptr, ctx.get()) != 1) {
      fail("EC_POINT_mul failed");
    }
    Bn rx = new_bn();
    Bn ry = new_bn();
    if (EC_POINT_get_affine_coordinates(c.group.get(), big_r.get(), rx.get(), ry.get(),
                                        ctx.get()) != 1) {
      continue;
    }
    Bn r = new_bn();
    if (BN_nnmod(r.get(), rx.get(), c.order.get(), ctx.get()) != 1) fail("BN_nnmod failed");
    if (BN_is_zero(r.get())) continue;
    // x >= n would need recovery ids 2/3, which legacy v cannot express.
    if (BN_cmp(rx.get(), c.order.get()) >= 0) continue;

    // s = k^-1 (z + r d) mod n
    Bn kinv = new_bn();
    if (!BN_mod_inverse(kinv.get(), k.get(), c.order.get(), ctx.get())) fail("no inverse");
    Bn rd = new_bn();
    Bn sum = new_bn();
    Bn s = new_bn();
    if (BN_mod_mul(rd.get(), r.get(), d.get(), c.order.get(), ctx.get()) != 1 ||
        BN_mod_add(sum.get(), z.get(), rd.get(), c.order.get(), ctx.get()) != 1 ||
        BN_mod_mul(s.get(), kinv.get(), sum.get(), c.order.get(), ctx.get()) != 1) {
      fail("scalar arithmetic failed");
    }
    if (BN_is_zero(s.get())) continue;

    std::uint8_t recid = BN_is_odd(ry.get()) ? 1 : 0;
    if (BN_cmp(s.get(), c.half_order.get()) > 0) {
      if (BN_sub(s.get(), c.order.get(), s.get()) != 1) fail("BN_sub failed");
      recid ^= 1;
    }
    return {Hash32{bn_to32(r.get())}, Hash32{bn_to32(s.get())}, recid};
  }
}

Address recover_address(const Hash32& digest, const RecoverableSignature& sig) {
  const Curve& c = curve();
  if (sig.recovery_id > 1) fail("recovery id out of range");
  BnCtx ctx = new_ctx();
  Bn r = bn_from(sig.r.view());
  Bn s = bn_from(sig.s.view());
  if (!in_scalar_range(r.get()) || !in_scalar_range(s.get())) fail("signature out of range");

  Point big_r = new_point();
  if (EC_POINT_set_compressed_coordinates(c.group.get(), big_r.get(), r.get(), sig.recovery_id,
                                          ctx.get()) != 1) {
    fail("r is not the x coordinate of a curve point");
  }

  // Q = r^-1 (s R - z G) = (s r^-1) R + (-z r^-1) G
  Bn z = bn_from(digest.view());
  Bn rinv = new_bn();
  if (!BN_mod_inverse(rinv.get(), r.get(), c.order.get(), ctx.get())) fail("no inverse");
  Bn u1 = new_bn();
  Bn u2 = new_bn();
  Bn zero = new_bn();
  BN_zero(zero.get());
  Bn neg_z = new_bn();
  if (BN_mod_sub(neg_z.get(), zero.get(), z.get(), c.order.get(), ctx.get()) != 1 ||
      BN_mod_mul(u1.get(), neg_z.get(), rinv.get(), c.order.get(), ctx.get()) != 1 ||
      BN_mod_mul(u2.get(), s.get(), rinv.get(), c.order.get(), ctx.get()) != 1) {
    fail("scalar arithmetic failed");
  }
  Point q = new_point();
  if (EC_POINT_mul(c.group.get(), q.get(), u1.get(), big_r.get(), u2.get(), ctx.get()) != 1) {
    fail("EC_POINT_mul failed");
  }
  if (EC_POINT_is_at_infinity(c.group.get(), q.get())) fail("recovered point at infinity");
  return address_of(point_xy(q.get(), ctx.get()));
}

}  // namespace provchain::crypto
