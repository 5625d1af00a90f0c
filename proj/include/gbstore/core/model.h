#ifndef GBSTORE_CORE_MODEL_H_
#define GBSTORE_CORE_MODEL_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gbstore {

/// Addresses one retrievable item: a whole object, or a member of a TAR
/// shard object when `archpath` is set.
struct ObjectRef {
  std::string bucket;
  std::string objname;
  std::optional<std::string> archpath;

  bool is_archive_member() const { return archpath.has_value(); }
  friend bool operator==(const ObjectRef&, const ObjectRef&) = default;
};

enum class OutputMime { kTar };

struct BatchRequest {
  OutputMime mime = OutputMime::kTar;
  std::vector<ObjectRef> entries;
  bool strm = false;
  bool coer = false;
  std::optional<int64_t> coloc;

  friend bool operator==(const BatchRequest&, const BatchRequest&) = default;
};

enum class ItemStatus : uint8_t { kOk = 0, kSoftError = 1 };

struct BatchItemResult {
  uint32_t index = 0;
  std::string name;
  ItemStatus status = ItemStatus::kOk;
  std::optional<std::string> error_reason;
  std::string payload;

  static BatchItemResult ok(uint32_t index, std::string name,
                            std::string payload);
  static BatchItemResult soft_error(uint32_t index, std::string name,
                                    std::string reason);
};

class RequestError : public std::runtime_error {
 public:
  enum class Kind { kParse, kUnsupportedMime, kValidation, kTooLarge };
  RequestError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr size_t kDefaultMaxRequestBody = size_t{64} << 20;

/// Parses and validates a GetBatch JSON body. Unknown top-level keys are
/// ignored; `strm`/`coer` default to false.
BatchRequest parse_batch_request(std::string_view body,
                                 size_t max_body = kDefaultMaxRequestBody);

/// Serializes to the same wire format parse_batch_request accepts.
std::string serialize_batch_request(const BatchRequest& request);

/// Throws RequestError(kValidation) when `ref` violates the naming rules.
void validate_object_ref(const ObjectRef& ref);

/// `<bucket>/<objname>` or `<bucket>/<objname>/<archpath>`.
std::string canonical_entry_name(const ObjectRef& ref);

/// 128-bit opaque execution identifier with a 32-char lowercase hex form.
class ExecutionId {
 public:
  ExecutionId() = default;
  explicit ExecutionId(const std::array<uint8_t, 16>& bytes) : bytes_(bytes) {}

  static ExecutionId generate();
  static std::optional<ExecutionId> from_hex(std::string_view hex);

  std::string hex() const;
  const std::array<uint8_t, 16>& bytes() const { return bytes_; }

  friend auto operator<=>(const ExecutionId&, const ExecutionId&) = default;

 private:
  std::array<uint8_t, 16> bytes_{};
};

struct ExecutionIdHash {
  size_t operator()(const ExecutionId& id) const noexcept;
};

}  // namespace gbstore

#endif  // GBSTORE_CORE_MODEL_H_
