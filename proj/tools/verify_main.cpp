#include <CLI11.hpp>

#include <iostream>

#include "provchain/verify/verify.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hash a file locally and check its notarization and anchor status"};
  std::string file;
  std::string api = "http://127.0.0.1:8080";
  bool quiet = false;
  int timeout_s = 10;
  app.add_option("file", file, "File to verify")->required();
  app.add_option("--api", api, "Asset API base URL")->capture_default_str();
  app.add_flag("-q,--quiet", quiet, "Print only the verdict line");
  app.add_option("--timeout", timeout_s, "Request timeout in seconds")->capture_default_str()->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(provchain::verify::Verdict::kError);
  }
  const auto outcome = provchain::verify::verify_file(file, api, std::chrono::seconds(timeout_s));
  std::cout << provchain::verify::render(outcome, quiet) << std::flush;
  return static_cast<int>(outcome.verdict);
}
