#pragma once

#include <string>

namespace provchain {

// "http://host:port/base" -> {"http://host:port", "/base"}; the path is empty
// when the URL has none. Throws Error(kValidation) for other schemes.
struct HttpUrl {
  std::string origin;
  std::string path;
};
HttpUrl split_http_url(const std::string& url);

}  // namespace provchain
