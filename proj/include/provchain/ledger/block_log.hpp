#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "provchain/common/bytes.hpp"
#include "provchain/ledger/types.hpp"

namespace provchain::ledger {

// Append-only block store; byte layout in docs/storage-formats.md.
//
//   blocks.log  sequence of records: u32 big-endian length || canonical block bytes
//   blocks.idx  "PCBIDX01" || u64 big-endian offset of each record in blocks.log
//
// The index is derived data: it is rebuilt whenever it disagrees with the log.
// A torn trailing record (crash mid-append) is cut off when the log is opened.
class BlockLog {
 public:
  explicit BlockLog(std::filesystem::path dir);

  std::size_t count() const { return offsets_.size(); }
  void append(const Block& block);
  Bytes read(std::size_t index) const;
  std::vector<Bytes> read_all() const;
  // Keeps the first `count` records; used when a fork replaces the chain suffix.
  void truncate(std::size_t count);

  const std::filesystem::path& log_path() const { return log_path_; }
  const std::filesystem::path& index_path() const { return index_path_; }

 private:
  void scan_and_repair();
  void write_index() const;

  std::filesystem::path log_path_;
  std::filesystem::path index_path_;
  std::vector<std::uint64_t> offsets_;
  std::uint64_t end_ = 0;
};

}  // namespace provchain::ledger
