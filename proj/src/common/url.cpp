#include "provchain/common/url.hpp"

#include "provchain/common/error.hpp"

namespace provchain {

HttpUrl split_http_url(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (!url.starts_with(kScheme) || url.size() == kScheme.size()) {
    throw Error(ErrorCode::kValidation, "expected an http:// url, got '" + url + "'");
  }
  const auto slash = url.find('/', kScheme.size());
  HttpUrl out;
  out.origin = url.substr(0, slash);
  if (slash != std::string::npos) out.path = url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace provchain
