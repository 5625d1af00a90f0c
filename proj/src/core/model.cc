#include "gbstore/core/model.h"

#include <cstring>
#include <random>

#include "json.hpp"

namespace gbstore {
namespace {

using json = nlohmann::json;

bool has_control_char(std::string_view s) {
  for (unsigned char c : s) {
    if (c < 0x20 || c == 0x7f) return true;
  }
  return false;
}

void check_name(std::string_view field, std::string_view value) {
  if (value.empty()) {
    throw RequestError(RequestError::Kind::kValidation,
                       std::string(field) + " must be non-empty");
  }
  if (value.front() == '/') {
    throw RequestError(RequestError::Kind::kValidation,
                       std::string(field) + " must not start with '/'");
  }
  if (has_control_char(value)) {
    throw RequestError(RequestError::Kind::kValidation,
                       std::string(field) + " contains control characters");
  }
}

std::string required_string(const json& entry, const char* key, size_t index) {
  auto it = entry.find(key);
  if (it == entry.end() || !it->is_string()) {
    throw RequestError(RequestError::Kind::kValidation,
                       "in[" + std::to_string(index) + "]: missing string '" +
                           key + "'");
  }
  return it->get<std::string>();
}

bool optional_bool(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return false;
  if (!it->is_boolean()) {
    throw RequestError(RequestError::Kind::kValidation,
                       std::string("'") + key + "' must be a boolean");
  }
  return it->get<bool>();
}

}  // namespace

BatchItemResult BatchItemResult::ok(uint32_t index, std::string name,
                                    std::string payload) {
  BatchItemResult r;
  r.index = index;
  r.name = std::move(name);
  r.status = ItemStatus::kOk;
  r.payload = std::move(payload);
  return r;
}

BatchItemResult BatchItemResult::soft_error(uint32_t index, std::string name,
                                            std::string reason) {
  BatchItemResult r;
  r.index = index;
  r.name = std::move(name);
  r.status = ItemStatus::kSoftError;
  r.error_reason = std::move(reason);
  return r;
}

void validate_object_ref(const ObjectRef& ref) {
  check_name("bucket", ref.bucket);
  check_name("objname", ref.objname);
  if (ref.archpath) check_name("archpath", *ref.archpath);
}

BatchRequest parse_batch_request(std::string_view body, size_t max_body) {
  if (body.size() > max_body) {
    throw RequestError(RequestError::Kind::kTooLarge,
                       "request body exceeds " + std::to_string(max_body) +
                           " bytes");
  }
  json doc;
  try {
    doc = json::parse(body.begin(), body.end());
  } catch (const json::parse_error& e) {
    throw RequestError(RequestError::Kind::kParse, e.what());
  }
  if (!doc.is_object()) {
    throw RequestError(RequestError::Kind::kParse,
                       "request body must be a JSON object");
  }

  BatchRequest req;
  auto mime = doc.find("mime");
  if (mime != doc.end()) {
    if (!mime->is_string()) {
      throw RequestError(RequestError::Kind::kValidation,
                         "'mime' must be a string");
    }
    const auto& m = mime->get_ref<const std::string&>();
    if (m != "tar") {
      throw RequestError(RequestError::Kind::kUnsupportedMime,
                         "unsupported output mime '" + m + "'");
    }
  }

  auto in = doc.find("in");
  if (in == doc.end() || !in->is_array() || in->empty()) {
    throw RequestError(RequestError::Kind::kValidation,
                       "'in' must be a non-empty array");
  }
  req.entries.reserve(in->size());
  size_t index = 0;
  for (const auto& entry : *in) {
    if (!entry.is_object()) {
      throw RequestError(RequestError::Kind::kValidation,
                         "in[" + std::to_string(index) + "] is not an object");
    }
    ObjectRef ref;
    ref.bucket = required_string(entry, "bucket", index);
    ref.objname = required_string(entry, "objname", index);
    auto arch = entry.find("archpath");
    if (arch != entry.end() && !arch->is_null()) {
      if (!arch->is_string()) {
        throw RequestError(RequestError::Kind::kValidation,
                           "in[" + std::to_string(index) +
                               "]: 'archpath' must be a string");
      }
      ref.archpath = arch->get<std::string>();
    }
    validate_object_ref(ref);
    req.entries.push_back(std::move(ref));
    ++index;
  }

  req.strm = optional_bool(doc, "strm");
  req.coer = optional_bool(doc, "coer");
  auto coloc = doc.find("coloc");
  if (coloc != doc.end() && !coloc->is_null()) {
    if (!coloc->is_number_integer() || coloc->get<int64_t>() < 0) {
      throw RequestError(RequestError::Kind::kValidation,
                         "'coloc' must be a non-negative integer");
    }
    req.coloc = coloc->get<int64_t>();
  }
  return req;
}

std::string serialize_batch_request(const BatchRequest& request) {
  json in = json::array();
  for (const auto& e : request.entries) {
    json j = {{"bucket", e.bucket}, {"objname", e.objname}};
    if (e.archpath) j["archpath"] = *e.archpath;
    in.push_back(std::move(j));
  }
  json doc = {{"mime", "tar"},
              {"in", std::move(in)},
              {"strm", request.strm},
              {"coer", request.coer}};
  if (request.coloc) doc["coloc"] = *request.coloc;
  return doc.dump();
}

std::string canonical_entry_name(const ObjectRef& ref) {
  std::string name;
  name.reserve(ref.bucket.size() + ref.objname.size() +
               (ref.archpath ? ref.archpath->size() + 2 : 1));
  name.append(ref.bucket).append(1, '/').append(ref.objname);
  if (ref.archpath) name.append(1, '/').append(*ref.archpath);
  return name;
}

ExecutionId ExecutionId::generate() {
  thread_local std::mt19937_64 rng{[] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd()};
    std::mt19937_64 g(seq);
    return g;
  }()};
  std::array<uint8_t, 16> bytes;
  uint64_t hi = rng(), lo = rng();
  std::memcpy(bytes.data(), &hi, 8);
  std::memcpy(bytes.data() + 8, &lo, 8);
  return ExecutionId(bytes);
}

std::optional<ExecutionId> ExecutionId::from_hex(std::string_view hex) {
  if (hex.size() != 32) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::array<uint8_t, 16> bytes;
  for (size_t i = 0; i < 16; ++i) {
    int h = nibble(hex[2 * i]), l = nibble(hex[2 * i + 1]);
    if (h < 0 || l < 0) return std::nullopt;
    bytes[i] = static_cast<uint8_t>(h << 4 | l);
  }
  return ExecutionId(bytes);
}

std::string ExecutionId::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(32, '0');
  for (size_t i = 0; i < 16; ++i) {
    out[2 * i] = kDigits[bytes_[i] >> 4];
    out[2 * i + 1] = kDigits[bytes_[i] & 0xf];
  }
  return out;
}

size_t ExecutionIdHash::operator()(const ExecutionId& id) const noexcept {
  uint64_t a, b;
  std::memcpy(&a, id.bytes().data(), 8);
  std::memcpy(&b, id.bytes().data() + 8, 8);
  return static_cast<size_t>(a ^ (b * 0x9e3779b97f4a7c15ULL));
}

}  // namespace gbstore
