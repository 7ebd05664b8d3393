#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace provchain {

// Milliseconds since the Unix epoch. Injected everywhere a component needs
// "now" so tests can drive time deterministically.
using Clock = std::function<std::int64_t()>;

std::int64_t system_now_ms();
inline Clock system_clock() { return &system_now_ms; }

// "Thu, 05 Apr 2018 20:09:38 GMT"
std::string format_rfc1123(std::int64_t unix_seconds);
std::optional<std::int64_t> parse_rfc1123(std::string_view text);

// ISO-8601 UTC with a trailing Z, used in logs.
std::string format_iso8601(std::int64_t unix_ms);

}  // namespace provchain
