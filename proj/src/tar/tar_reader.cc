#include <algorithm>
#include <charconv>
#include <cstring>

#include "gbstore/tar/tar.h"

namespace gbstore::tar {
namespace {

std::string_view field(std::string_view block, size_t offset, size_t width) {
  auto f = block.substr(offset, width);
  auto nul = f.find('\0');
  return nul == std::string_view::npos ? f : f.substr(0, nul);
}

uint64_t parse_numeric(std::string_view block, size_t offset, size_t width) {
  auto raw = block.substr(offset, width);
  if (static_cast<unsigned char>(raw[0]) & 0x80) {
    uint64_t v = 0;
    for (size_t i = 1; i < raw.size(); ++i) {
      v = (v << 8) | static_cast<unsigned char>(raw[i]);
    }
    return v;
  }
  uint64_t v = 0;
  size_t i = 0;
  while (i < raw.size() && raw[i] == ' ') ++i;
  for (; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\0' || c == ' ') break;
    if (c < '0' || c > '7') {
      throw TarFormatError("invalid octal digit in header field");
    }
    v = (v << 3) | static_cast<uint64_t>(c - '0');
  }
  return v;
}

}  // namespace

PaxRecords parse_pax_records(std::string_view data) {
  PaxRecords out;
  size_t pos = 0;
  while (pos < data.size()) {
    auto space = data.find(' ', pos);
    if (space == std::string_view::npos) {
      throw TarFormatError("PAX record without length");
    }
    size_t len = 0;
    auto [ptr, ec] = std::from_chars(data.data() + pos, data.data() + space, len);
    if (ec != std::errc() || ptr != data.data() + space || len == 0 ||
        pos + len > data.size() || data[pos + len - 1] != '\n') {
      throw TarFormatError("malformed PAX record length");
    }
    auto record = data.substr(space + 1, pos + len - 1 - (space + 1));
    auto eq = record.find('=');
    if (eq == std::string_view::npos) {
      throw TarFormatError("PAX record without '='");
    }
    out.emplace_back(std::string(record.substr(0, eq)),
                     std::string(record.substr(eq + 1)));
    pos += len;
  }
  return out;
}

HeaderStatus decode_header(std::string_view block, TarHeader& out) {
  if (block.size() != kBlockSize) {
    throw TarFormatError("header block must be 512 bytes");
  }
  if (std::all_of(block.begin(), block.end(), [](char c) { return c == 0; })) {
    return HeaderStatus::kZeroBlock;
  }
  uint64_t stored = parse_numeric(block, 148, 8);
  unsigned long unsigned_sum = 0;
  long signed_sum = 0;
  for (size_t i = 0; i < kBlockSize; ++i) {
    bool in_chksum = i >= 148 && i < 156;
    unsigned char u = in_chksum ? ' ' : static_cast<unsigned char>(block[i]);
    signed char s = in_chksum ? ' ' : static_cast<signed char>(block[i]);
    unsigned_sum += u;
    signed_sum += s;
  }
  if (stored != unsigned_sum && static_cast<long>(stored) != signed_sum) {
    return HeaderStatus::kBadChecksum;
  }

  out.name = std::string(field(block, 0, 100));
  if (field(block, 257, 5) == "ustar") {
    auto prefix = field(block, 345, 155);
    if (!prefix.empty()) out.name = std::string(prefix) + "/" + out.name;
  }
  out.size = parse_numeric(block, 124, 12);
  out.typeflag = block[156] == '\0' ? '0' : block[156];
  return HeaderStatus::kOk;
}

std::optional<std::string> TarEntry::soft_error_reason() const {
  auto it = pax.find(std::string(kStatusRecordKey));
  if (it == pax.end()) return std::nullopt;
  std::string_view v = it->second;
  if (v.substr(0, kSoftErrorPrefix.size()) != kSoftErrorPrefix) {
    return std::nullopt;
  }
  return std::string(v.substr(kSoftErrorPrefix.size()));
}

TarStreamParser::TarStreamParser(Callbacks callbacks)
    : cb_(std::move(callbacks)) {
  block_.reserve(kBlockSize);
}

void TarStreamParser::feed(std::string_view bytes) {
  total_bytes_ += bytes.size();
  while (!bytes.empty()) {
    switch (state_) {
      case State::kHeader:
      case State::kSecondZero: {
        size_t take = std::min(bytes.size(), kBlockSize - block_.size());
        block_.append(bytes.substr(0, take));
        bytes.remove_prefix(take);
        if (block_.size() < kBlockSize) break;
        if (state_ == State::kSecondZero) {
          if (std::any_of(block_.begin(), block_.end(),
                          [](char c) { return c != 0; })) {
            throw TarFormatError("single zero block inside archive");
          }
          state_ = State::kDone;
        } else {
          on_header_block();
        }
        block_.clear();
        break;
      }
      case State::kExtData: {
        size_t take = std::min<uint64_t>(bytes.size(), remaining_);
        ext_data_.append(bytes.substr(0, take));
        bytes.remove_prefix(take);
        remaining_ -= take;
        if (remaining_ > 0) break;
        if (ext_type_ == 'x') {
          for (auto& [k, v] : parse_pax_records(ext_data_)) {
            pending_pax_[k] = std::move(v);
          }
        } else if (ext_type_ == 'L') {
          auto nul = ext_data_.find('\0');
          pending_long_name_ = ext_data_.substr(0, nul);
        }
        ext_data_.clear();
        state_ = padding_ > 0 ? State::kPadding : State::kHeader;
        break;
      }
      case State::kData: {
        size_t take = std::min<uint64_t>(bytes.size(), remaining_);
        if (cb_.on_data) cb_.on_data(bytes.substr(0, take));
        payload_bytes_ += take;
        bytes.remove_prefix(take);
        remaining_ -= take;
        if (remaining_ > 0) break;
        if (cb_.on_entry_end) cb_.on_entry_end(current_);
        state_ = padding_ > 0 ? State::kPadding : State::kHeader;
        break;
      }
      case State::kPadding: {
        size_t take = std::min<uint64_t>(bytes.size(), padding_);
        bytes.remove_prefix(take);
        padding_ -= take;
        if (padding_ == 0) state_ = State::kHeader;
        break;
      }
      case State::kDone:
        // Readers ignore anything after the terminator.
        return;
    }
  }
}

void TarStreamParser::on_header_block() {
  TarHeader h;
  switch (decode_header(block_, h)) {
    case HeaderStatus::kZeroBlock:
      state_ = State::kSecondZero;
      return;
    case HeaderStatus::kBadChecksum:
      throw TarFormatError("header checksum mismatch at byte " +
                           std::to_string(total_bytes_));
    case HeaderStatus::kOk:
      break;
  }
  if (h.typeflag == 'x' || h.typeflag == 'g' || h.typeflag == 'L') {
    ext_type_ = h.typeflag;
    remaining_ = h.size;
    padding_ = padded_size(h.size) - h.size;
    ext_data_.clear();
    if (remaining_ == 0) {
      state_ = padding_ > 0 ? State::kPadding : State::kHeader;
    } else {
      state_ = State::kExtData;
    }
    return;
  }
  begin_data_entry(h);
}

void TarStreamParser::begin_data_entry(const TarHeader& h) {
  current_ = TarEntry{};
  current_.name = h.name;
  if (pending_long_name_) current_.name = *pending_long_name_;
  current_.size = h.size;
  current_.typeflag = h.typeflag;
  current_.pax = std::move(pending_pax_);
  pending_pax_.clear();
  pending_long_name_.reset();
  if (auto it = current_.pax.find("path"); it != current_.pax.end()) {
    current_.name = it->second;
  }
  if (auto it = current_.pax.find("size"); it != current_.pax.end()) {
    uint64_t size = 0;
    auto [ptr, ec] = std::from_chars(
        it->second.data(), it->second.data() + it->second.size(), size);
    if (ec != std::errc()) throw TarFormatError("bad PAX size record");
    current_.size = size;
  }
  ++entry_count_;
  if (cb_.on_entry_begin) cb_.on_entry_begin(current_);
  remaining_ = current_.size;
  padding_ = padded_size(current_.size) - current_.size;
  if (remaining_ == 0) {
    if (cb_.on_entry_end) cb_.on_entry_end(current_);
    state_ = padding_ > 0 ? State::kPadding : State::kHeader;
  } else {
    state_ = State::kData;
  }
}

}  // namespace gbstore::tar
