#include <algorithm>
#include <array>
#include <cstring>

#include "gbstore/tar/tar.h"

namespace gbstore::tar {
namespace {

constexpr std::string_view kPaxHeaderName = "@PaxHeader";
const std::array<char, kBlockSize> kZeroBlock{};

// Zero-padded octal in width - 1 digits followed by NUL.
void put_octal(char* field, size_t width, uint64_t value) {
  field[width - 1] = '\0';
  for (size_t i = width - 1; i-- > 0;) {
    field[i] = static_cast<char>('0' + (value & 7));
    value >>= 3;
  }
}

void put_base256(char* field, size_t width, uint64_t value) {
  std::memset(field, 0, width);
  field[0] = static_cast<char>(0x80);
  for (size_t i = width - 1; i > 0 && value != 0; --i) {
    field[i] = static_cast<char>(value & 0xff);
    value >>= 8;
  }
}

size_t decimal_digits(size_t n) {
  size_t d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

}  // namespace

std::string encode_pax_records(const PaxRecords& records) {
  std::string out;
  for (const auto& [key, value] : records) {
    // " key=value\n" plus the length prefix, which counts its own digits.
    size_t body = 1 + key.size() + 1 + value.size() + 1;
    size_t len = body + 1;
    while (len != body + decimal_digits(len)) len = body + decimal_digits(len);
    out += std::to_string(len);
    out += ' ';
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

std::string encode_header(std::string_view name, uint64_t size,
                          char typeflag) {
  std::string block(kBlockSize, '\0');
  char* b = block.data();
  std::memcpy(b, name.data(), std::min(name.size(), kUstarNameField));
  put_octal(b + 100, 8, 0644);
  put_octal(b + 108, 8, 0);
  put_octal(b + 116, 8, 0);
  if (size <= kMaxOctalSize) {
    put_octal(b + 124, 12, size);
  } else {
    put_base256(b + 124, 12, size);
  }
  put_octal(b + 136, 12, 0);
  b[156] = typeflag;
  std::memcpy(b + 257, "ustar", 6);
  std::memcpy(b + 263, "00", 2);
  put_octal(b + 329, 8, 0);
  put_octal(b + 337, 8, 0);

  std::memset(b + 148, ' ', 8);
  unsigned sum = 0;
  for (unsigned char c : block) sum += c;
  put_octal(b + 148, 7, sum);
  b[155] = ' ';
  return block;
}

TarWriter::TarWriter(ByteSink sink) : sink_(std::move(sink)) {}

void TarWriter::write(std::string_view bytes) {
  if (bytes.empty()) return;
  if (!sink_(bytes)) throw SinkError("tar sink write failed");
  bytes_written_ += bytes.size();
}

void TarWriter::write_zeros(size_t n) {
  while (n > 0) {
    size_t chunk = std::min(n, kZeroBlock.size());
    write(std::string_view(kZeroBlock.data(), chunk));
    n -= chunk;
  }
}

void TarWriter::begin_entry(std::string_view name, uint64_t size,
                            const PaxRecords& extra_records) {
  if (finalized_) throw TarUsageError("tar writer already finalized");
  if (in_entry_) throw TarUsageError("previous entry not finished");
  if (name.empty()) throw TarUsageError("empty entry name");
  if (name.size() > kMaxNameLength) {
    throw TarUsageError("entry name longer than " +
                        std::to_string(kMaxNameLength));
  }

  PaxRecords records;
  if (name.size() > kUstarNameField) records.emplace_back("path", name);
  if (size > kMaxOctalSize) records.emplace_back("size", std::to_string(size));
  records.insert(records.end(), extra_records.begin(), extra_records.end());

  if (!records.empty()) {
    std::string data = encode_pax_records(records);
    write(encode_header(kPaxHeaderName, data.size(), 'x'));
    write(data);
    write_zeros(padded_size(data.size()) - data.size());
  }
  write(encode_header(name, size, '0'));
  in_entry_ = true;
  entry_size_ = size;
  entry_remaining_ = size;
}

void TarWriter::write_payload(std::string_view chunk) {
  if (!in_entry_) throw TarUsageError("write_payload outside an entry");
  if (chunk.size() > entry_remaining_) {
    throw TarUsageError("payload exceeds declared entry size");
  }
  write(chunk);
  entry_remaining_ -= chunk.size();
}

void TarWriter::end_entry() {
  if (!in_entry_) throw TarUsageError("end_entry outside an entry");
  if (entry_remaining_ != 0) {
    throw TarUsageError("entry ended before its declared size");
  }
  write_zeros(padded_size(entry_size_) - entry_size_);
  in_entry_ = false;
}

void TarWriter::emit_entry(std::string_view name, std::string_view payload) {
  begin_entry(name, payload.size());
  write_payload(payload);
  end_entry();
}

void TarWriter::emit_placeholder(std::string_view name,
                                 std::string_view reason) {
  std::string value(kSoftErrorPrefix);
  value += reason;
  begin_entry(name, 0, {{std::string(kStatusRecordKey), std::move(value)}});
  end_entry();
}

uint64_t entry_archive_size(std::string_view name, uint64_t size,
                            std::optional<std::string_view> placeholder_reason) {
  PaxRecords records;
  if (name.size() > kUstarNameField) records.emplace_back("path", std::string(name));
  if (size > kMaxOctalSize) records.emplace_back("size", std::to_string(size));
  if (placeholder_reason) {
    records.emplace_back(std::string(kStatusRecordKey),
                         std::string(kSoftErrorPrefix) + std::string(*placeholder_reason));
  }
  uint64_t n = kBlockSize + padded_size(size);
  if (!records.empty()) n += kBlockSize + padded_size(encode_pax_records(records).size());
  return n;
}

uint64_t TarWriter::finalize() {
  if (finalized_) throw TarUsageError("tar writer finalized twice");
  if (in_entry_) throw TarUsageError("finalize inside an unfinished entry");
  write_zeros(2 * kBlockSize);
  finalized_ = true;
  return bytes_written_;
}

}  // namespace gbstore::tar
