#include "provchain/api/cidr.hpp"

#include <arpa/inet.h>

#include <charconv>

#include "provchain/common/error.hpp"

namespace provchain::api {

namespace {

struct Parsed {
  std::array<unsigned char, 16> bytes{};
  bool v4 = false;
};

std::optional<Parsed> parse_address(std::string_view text) {
  std::string s(text);
  Parsed p;
  if (inet_pton(AF_INET, s.c_str(), p.bytes.data()) == 1) {
    p.v4 = true;
    return p;
  }
  if (inet_pton(AF_INET6, s.c_str(), p.bytes.data()) == 1) {
    static constexpr unsigned char kMapped[12] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff};
    if (std::equal(std::begin(kMapped), std::end(kMapped), p.bytes.begin())) {
      std::copy(p.bytes.begin() + 12, p.bytes.end(), p.bytes.begin());
      std::fill(p.bytes.begin() + 4, p.bytes.end(), 0);
      p.v4 = true;
    }
    return p;
  }
  return std::nullopt;
}

}  // namespace

Cidr Cidr::parse(std::string_view text) {
  const auto slash = text.find('/');
  auto addr = parse_address(text.substr(0, slash));
  if (!addr) throw Error(ErrorCode::kValidation, "invalid address in allowlist: " + std::string(text));
  Cidr c;
  c.v4_ = addr->v4;
  c.net_ = addr->bytes;
  const unsigned max = c.v4_ ? 32 : 128;
  c.prefix_ = max;
  if (slash != std::string_view::npos) {
    auto bits = text.substr(slash + 1);
    auto [ptr, ec] = std::from_chars(bits.data(), bits.data() + bits.size(), c.prefix_);
    if (ec != std::errc() || ptr != bits.data() + bits.size() || bits.empty() || c.prefix_ > max) {
      throw Error(ErrorCode::kValidation, "invalid prefix length in allowlist: " + std::string(text));
    }
  }
  c.text_ = std::string(text);
  return c;
}

bool Cidr::contains(std::string_view address) const {
  auto addr = parse_address(address);
  if (!addr || addr->v4 != v4_) return false;
  unsigned bits = prefix_;
  for (std::size_t i = 0; bits > 0; ++i) {
    const unsigned take = bits >= 8 ? 8 : bits;
    const unsigned char mask = static_cast<unsigned char>(0xff << (8 - take));
    if ((addr->bytes[i] & mask) != (net_[i] & mask)) return false;
    bits -= take;
  }
  return true;
}

Allowlist::Allowlist(const std::vector<std::string>& ranges) {
  for (const auto& r : ranges) ranges_.push_back(Cidr::parse(r));
}

bool Allowlist::allows(std::string_view address) const {
  for (const auto& r : ranges_) {
    if (r.contains(address)) return true;
  }
  return false;
}

}  // namespace provchain::api
