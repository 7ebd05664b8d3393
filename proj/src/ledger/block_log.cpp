#include "provchain/ledger/block_log.hpp"

#include <cstdio>
#include <fstream>
#include <unistd.h>

#include "provchain/common/error.hpp"
#include "provchain/ledger/codec.hpp"

namespace provchain::ledger {
namespace {

constexpr char kIndexMagic[8] = {'P', 'C', 'B', 'I', 'D', 'X', '0', '1'};

Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_synced(const std::filesystem::path& p, ByteView data, const char* mode) {
  std::FILE* f = std::fopen(p.c_str(), mode);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + p.string());
  const bool ok = std::fwrite(data.data(), 1, data.size(), f) == data.size() &&
                  std::fflush(f) == 0 && ::fsync(fileno(f)) == 0;
  std::fclose(f);
  if (!ok) throw Error(ErrorCode::kIo, "write failed: " + p.string());
}

}  // namespace

BlockLog::BlockLog(std::filesystem::path dir)
    : log_path_(dir / "blocks.log"), index_path_(dir / "blocks.idx") {
  std::filesystem::create_directories(dir);
  if (!std::filesystem::exists(log_path_)) write_synced(log_path_, {}, "wb");
  scan_and_repair();
}

void BlockLog::scan_and_repair() {
  const Bytes log = read_file(log_path_);
  offsets_.clear();
  std::uint64_t pos = 0;
  while (log.size() - pos >= 4) {
    Reader r(ByteView(log).subspan(pos, 4));
    const std::uint32_t len = r.u32();
    if (log.size() - pos - 4 < len) break;
    offsets_.push_back(pos);
    pos += 4 + len;
  }
  end_ = pos;
  if (pos != log.size()) std::filesystem::resize_file(log_path_, pos);

  const Bytes idx = read_file(index_path_);
  bool consistent = idx.size() == 8 + 8 * offsets_.size() &&
                    std::equal(kIndexMagic, kIndexMagic + 8, idx.begin());
  if (consistent) {
    Reader r(ByteView(idx).subspan(8));
    for (std::uint64_t off : offsets_) consistent = consistent && r.u64() == off;
  }
  if (!consistent) write_index();
}

void BlockLog::write_index() const {
  Writer w;
  for (char c : kIndexMagic) w.u8(static_cast<std::uint8_t>(c));
  for (std::uint64_t off : offsets_) w.u64(off);
  write_synced(index_path_, w.data(), "wb");
}

void BlockLog::append(const Block& block) {
  const Bytes body = block.serialize();
  Writer w;
  w.bytes(body);
  write_synced(log_path_, w.data(), "ab");
  offsets_.push_back(end_);
  end_ += w.data().size();
  Writer iw;
  iw.u64(offsets_.back());
  if (offsets_.size() == 1) {
    write_index();
  } else {
    write_synced(index_path_, iw.data(), "ab");
  }
}

Bytes BlockLog::read(std::size_t index) const {
  if (index >= offsets_.size()) throw Error(ErrorCode::kIo, "block record out of range");
  std::ifstream in(log_path_, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(offsets_[index]));
  std::uint8_t len_bytes[4];
  in.read(reinterpret_cast<char*>(len_bytes), 4);
  Reader r(ByteView(len_bytes, 4));
  Bytes out(r.u32());
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!in) throw Error(ErrorCode::kIo, "short read from block log");
  return out;
}

std::vector<Bytes> BlockLog::read_all() const {
  const Bytes log = read_file(log_path_);
  std::vector<Bytes> out;
  out.reserve(offsets_.size());
  for (std::uint64_t off : offsets_) {
    Reader r(ByteView(log).subspan(off));
    out.push_back(r.bytes());
  }
  return out;
}

void BlockLog::truncate(std::size_t count) {
  if (count >= offsets_.size()) return;
  end_ = offsets_[count];
  offsets_.resize(count);
  std::filesystem::resize_file(log_path_, end_);
  write_index();
}

}  // namespace provchain::ledger
