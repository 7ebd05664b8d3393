#include "provchain/ingest/hasher.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <vector>

#include "provchain/common/error.hpp"

namespace provchain::ingest {

FileHashes hash_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) throw Error(ErrorCode::kIo, path.string() + " is a directory");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string() + ": " + std::strerror(errno));
  crypto::DualHasher hasher;
  std::vector<std::uint8_t> buf(kHashChunk);
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    if (n > 0) hasher.update(ByteView(buf.data(), n));
  }
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed: " + path.string());
  return hasher.finish();
}

}  // namespace provchain::ingest
