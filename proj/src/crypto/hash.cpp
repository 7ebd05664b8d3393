#include "provchain/crypto/hash.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "provchain/common/error.hpp"

namespace provchain::crypto {
namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

MdCtx new_ctx(const EVP_MD* md) {
  MdCtx ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1) {
    throw Error(ErrorCode::kIo, "digest initialisation failed");
  }
  return ctx;
}

template <std::size_t N>
std::array<std::uint8_t, N> one_shot(const EVP_MD* md, ByteView data) {
  std::array<std::uint8_t, N> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, md, nullptr) != 1 || len != N) {
    throw Error(ErrorCode::kIo, "digest failed");
  }
  return out;
}

}  // namespace

Hash32 sha256(ByteView data) { return Hash32{one_shot<32>(EVP_sha256(), data)}; }

Hash32 sha256d(ByteView data) {
  const Hash32 first = sha256(data);
  return sha256(first.view());
}

std::array<std::uint8_t, 16> md5(ByteView data) { return one_shot<16>(EVP_md5(), data); }

Hash32 hmac_sha256(ByteView key, ByteView data) {
  Hash32 out;
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
           out.bytes.data(), &len) == nullptr ||
      len != 32) {
    throw Error(ErrorCode::kIo, "hmac failed");
  }
  return out;
}

struct DualHasher::Impl {
  MdCtx md5 = new_ctx(EVP_md5());
  MdCtx sha = new_ctx(EVP_sha256());
  std::uint64_t count = 0;
};

DualHasher::DualHasher() : impl_(std::make_unique<Impl>()) {}
DualHasher::~DualHasher() = default;
DualHasher::DualHasher(DualHasher&&) noexcept = default;
DualHasher& DualHasher::operator=(DualHasher&&) noexcept = default;

void DualHasher::update(ByteView chunk) {
  if (EVP_DigestUpdate(impl_->md5.get(), chunk.data(), chunk.size()) != 1 ||
      EVP_DigestUpdate(impl_->sha.get(), chunk.data(), chunk.size()) != 1) {
    throw Error(ErrorCode::kIo, "digest update failed");
  }
  impl_->count += chunk.size();
}

DualHasher::Digests DualHasher::finish() {
  std::array<std::uint8_t, 16> m{};
  std::array<std::uint8_t, 32> s{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(impl_->md5.get(), m.data(), &len) != 1 ||
      EVP_DigestFinal_ex(impl_->sha.get(), s.data(), &len) != 1) {
    throw Error(ErrorCode::kIo, "digest finalisation failed");
  }
  return {to_hex(m), to_hex(s), impl_->count};
}

}  // namespace provchain::crypto
