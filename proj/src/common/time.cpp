#include "provchain/common/time.hpp"

#include <array>
#include <cstdio>
#include <ctime>

namespace provchain {
namespace {

// Fixed English names; strftime would follow the process locale.
constexpr std::array<const char*, 7> kDays = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
constexpr std::array<const char*, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                 "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

std::tm utc(std::int64_t unix_seconds) {
  const std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return tm;
}

}  // namespace

std::int64_t system_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string format_rfc1123(std::int64_t unix_seconds) {
  const std::tm tm = utc(unix_seconds);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s, %02d %s %04d %02d:%02d:%02d GMT", kDays[tm.tm_wday],
                tm.tm_mday, kMonths[tm.tm_mon], tm.tm_year + 1900, tm.tm_hour, tm.tm_min,
                tm.tm_sec);
  return buf;
}

std::optional<std::int64_t> parse_rfc1123(std::string_view text) {
  if (text.size() != 29) return std::nullopt;
  char day[4] = {}, mon[4] = {}, zone[4] = {};
  int mday = 0, year = 0, hh = 0, mm = 0, ss = 0;
  const std::string s(text);
  if (std::sscanf(s.c_str(), "%3s, %2d %3s %4d %2d:%2d:%2d %3s", day, &mday, mon, &year, &hh,
                  &mm, &ss, zone) != 8) {
    return std::nullopt;
  }
  if (std::string_view(zone) != "GMT") return std::nullopt;
  int month = -1;
  for (int i = 0; i < 12; ++i) {
    if (std::string_view(kMonths[i]) == mon) month = i;
  }
  if (month < 0) return std::nullopt;
  std::tm tm{};
  tm.tm_year = year - 1900;
  tm.tm_mon = month;
  tm.tm_mday = mday;
  tm.tm_hour = hh;
  tm.tm_min = mm;
  tm.tm_sec = ss;
  const std::int64_t secs = timegm(&tm);
  // Reject out-of-range fields and weekday mismatches by round-tripping.
  if (format_rfc1123(secs) != s) return std::nullopt;
  return secs;
}

std::string format_iso8601(std::int64_t unix_ms) {
  const std::tm tm = utc(unix_ms / 1000);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(unix_ms % 1000));
  return buf;
}

}  // namespace provchain
