#ifndef GBSTORE_STORE_TARGET_STORE_H_
#define GBSTORE_STORE_TARGET_STORE_H_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gbstore/core/model.h"
#include "gbstore/util/thread_pool.h"

namespace gbstore {

// Soft-error reasons. These strings travel on the wire and inside TAR
// placeholders.
inline constexpr std::string_view kReasonNotFound = "not_found";
inline constexpr std::string_view kReasonBadArchive = "bad_archive";
inline constexpr std::string_view kReasonMemberNotFound = "member_not_found";
inline constexpr std::string_view kReasonTimeout = "timeout";
inline constexpr std::string_view kReasonIoError = "io_error";

/// Local IO failure (permissions, disk full, ...). Fatal for the request.
class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A bucket or object name that cannot be mapped under the store root.
class InvalidObjectName : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ReadResult {
  std::string bytes;
  std::optional<std::string> soft_error;

  bool ok() const { return !soft_error.has_value(); }
  static ReadResult success(std::string bytes) { return {std::move(bytes), {}}; }
  static ReadResult failure(std::string_view reason) {
    return {{}, std::string(reason)};
  }
};

/// Objects live at `<root>/<bucket>/<objname>`. Writes go through a temp
/// file and rename, so readers never see a partial object.
class TargetStore {
 public:
  explicit TargetStore(std::filesystem::path root,
                       size_t readahead_workers = 4);
  ~TargetStore();

  TargetStore(const TargetStore&) = delete;
  TargetStore& operator=(const TargetStore&) = delete;

  /// Throws InvalidObjectName or StoreError.
  uint64_t put_object(const ObjectRef& ref, std::string_view content);

  /// Whole object, or the named member when `ref.archpath` is set. Missing
  /// objects and members come back as soft errors; IO failures throw
  /// StoreError.
  ReadResult read_local(const ObjectRef& ref) const;

  /// Best-effort page-cache warming on the background pool, in list order.
  /// When `claimed` is given, entries below its value are already being
  /// read by the caller and are skipped.
  void readahead(std::span<const ObjectRef> entries,
                 std::shared_ptr<const std::atomic<size_t>> claimed = nullptr);
  void wait_readahead_idle();

  std::optional<uint64_t> object_size(const ObjectRef& ref) const;

  /// nullopt when the name is invalid or would escape the root.
  std::optional<std::filesystem::path> object_path(
      std::string_view bucket, std::string_view objname) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  ReadResult read_member(int fd, const std::string& archpath) const;

  std::filesystem::path root_;
  std::filesystem::path tmp_dir_;
  std::unique_ptr<ThreadPool> readahead_pool_;
};

}  // namespace gbstore

#endif  // GBSTORE_STORE_TARGET_STORE_H_
