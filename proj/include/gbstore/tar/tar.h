#ifndef GBSTORE_TAR_TAR_H_
#define GBSTORE_TAR_TAR_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gbstore::tar {

inline constexpr size_t kBlockSize = 512;
inline constexpr size_t kMaxNameLength = 10000;
inline constexpr size_t kUstarNameField = 100;
// Largest size an 11-digit octal field can carry (8 GiB - 1).
inline constexpr uint64_t kMaxOctalSize = 077777777777ULL;

inline constexpr std::string_view kStatusRecordKey = "GETBATCH.status";
inline constexpr std::string_view kSoftErrorPrefix = "soft-error:";

/// Misuse of the writer (emit after finalize, oversize name, ...).
class TarUsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The byte sink refused a write.
class SinkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed archive input.
class TarFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using PaxRecords = std::vector<std::pair<std::string, std::string>>;

/// Returns false when the bytes could not be delivered.
using ByteSink = std::function<bool(std::string_view)>;

inline uint64_t padded_size(uint64_t n) {
  return (n + kBlockSize - 1) / kBlockSize * kBlockSize;
}

/// Encodes `len key=value\n` records; the length prefix counts itself.
std::string encode_pax_records(const PaxRecords& records);

/// Bytes TarWriter adds for one entry: emit_entry(name, <size bytes>), or
/// emit_placeholder(name, reason) when `placeholder_reason` is set.
uint64_t entry_archive_size(std::string_view name, uint64_t size,
                            std::optional<std::string_view> placeholder_reason = std::nullopt);
PaxRecords parse_pax_records(std::string_view data);

/// Incremental USTAR/PAX writer. Headers carry mtime 0, uid/gid 0 and mode
/// 0644, so identical emit sequences produce identical bytes. Single
/// writer; not thread-safe.
class TarWriter {
 public:
  explicit TarWriter(ByteSink sink);

  void emit_entry(std::string_view name, std::string_view payload);

  /// Zero-length entry tagged with `GETBATCH.status=soft-error:<reason>`.
  void emit_placeholder(std::string_view name, std::string_view reason);

  /// Streaming form of emit_entry: exactly `size` payload bytes must be
  /// written before end_entry().
  void begin_entry(std::string_view name, uint64_t size,
                   const PaxRecords& extra_records = {});
  void write_payload(std::string_view chunk);
  void end_entry();

  /// Writes the two zero blocks and returns the archive length.
  uint64_t finalize();

  uint64_t bytes_written() const { return bytes_written_; }
  bool finalized() const { return finalized_; }

 private:
  void write(std::string_view bytes);
  void write_zeros(size_t n);

  ByteSink sink_;
  uint64_t bytes_written_ = 0;
  bool finalized_ = false;
  bool in_entry_ = false;
  uint64_t entry_remaining_ = 0;
  uint64_t entry_size_ = 0;
};

struct TarHeader {
  std::string name;
  uint64_t size = 0;
  char typeflag = '0';
};

enum class HeaderStatus { kOk, kZeroBlock, kBadChecksum };

/// Decodes one 512-byte header block (USTAR prefix joined to the name).
HeaderStatus decode_header(std::string_view block, TarHeader& out);

/// Builds a header block; exposed for tests that check field encodings.
std::string encode_header(std::string_view name, uint64_t size, char typeflag);

struct TarEntry {
  std::string name;
  uint64_t size = 0;
  char typeflag = '0';
  std::map<std::string, std::string> pax;

  /// Reason carried by a soft-error placeholder, if this is one.
  std::optional<std::string> soft_error_reason() const;
};

/// Push parser for a TAR byte stream. Understands PAX `x` headers (path,
/// size and arbitrary records), ignores `g` globals, and accepts GNU `L`
/// long names.
class TarStreamParser {
 public:
  struct Callbacks {
    std::function<void(const TarEntry&)> on_entry_begin;
    std::function<void(std::string_view)> on_data;
    std::function<void(const TarEntry&)> on_entry_end;
  };

  explicit TarStreamParser(Callbacks callbacks);

  /// Throws TarFormatError on a malformed stream.
  void feed(std::string_view bytes);

  /// True once the two-block terminator has been consumed.
  bool finished() const { return state_ == State::kDone; }
  uint64_t total_bytes() const { return total_bytes_; }
  uint64_t payload_bytes() const { return payload_bytes_; }
  size_t entry_count() const { return entry_count_; }

 private:
  enum class State { kHeader, kExtData, kData, kPadding, kSecondZero, kDone };

  void on_header_block();
  void begin_data_entry(const TarHeader& h);

  Callbacks cb_;
  State state_ = State::kHeader;
  std::string block_;
  std::string ext_data_;
  char ext_type_ = 0;
  uint64_t remaining_ = 0;
  uint64_t padding_ = 0;
  TarEntry current_;
  std::map<std::string, std::string> pending_pax_;
  std::optional<std::string> pending_long_name_;
  uint64_t total_bytes_ = 0;
  uint64_t payload_bytes_ = 0;
  size_t entry_count_ = 0;
};

}  // namespace gbstore::tar

#endif  // GBSTORE_TAR_TAR_H_
