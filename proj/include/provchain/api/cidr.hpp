#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace provchain::api {

// An IPv4 or IPv6 network. IPv4-mapped IPv6 peers match IPv4 ranges.
class Cidr {
 public:
  // "10.0.0.0/8", "::1/128", or a bare address (full-length prefix).
  // Throws Error(kValidation).
  static Cidr parse(std::string_view text);

  bool contains(std::string_view address) const;
  std::string str() const { return text_; }

 private:
  std::array<unsigned char, 16> net_{};
  unsigned prefix_ = 0;
  bool v4_ = false;
  std::string text_;
};

class Allowlist {
 public:
  Allowlist() = default;
  explicit Allowlist(const std::vector<std::string>& ranges);

  bool allows(std::string_view address) const;
  const std::vector<Cidr>& ranges() const { return ranges_; }

 private:
  std::vector<Cidr> ranges_;
};

}  // namespace provchain::api
