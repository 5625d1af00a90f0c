#include "gbstore/store/target_store.h"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <memory>

#include "gbstore/tar/tar.h"

namespace gbstore {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kTmpDirName = ".gbstore-tmp";

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }

 private:
  int fd_;
};

bool valid_component(std::string_view c) {
  return !c.empty() && c != "." && c != ".." &&
         c.find('\0') == std::string_view::npos;
}

std::string errno_message(const std::string& what, const fs::path& p) {
  return what + " " + p.string() + ": " + std::strerror(errno);
}

// Reads exactly `len` bytes at `offset`; returns how many were available.
size_t pread_full(int fd, char* buf, size_t len, uint64_t offset,
                  const fs::path& path) {
  size_t done = 0;
  while (done < len) {
    ssize_t n = ::pread(fd, buf + done, len - done,
                        static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StoreError(errno_message("read", path));
    }
    if (n == 0) break;
    done += static_cast<size_t>(n);
  }
  return done;
}

std::string_view strip_dot_slash(std::string_view name) {
  while (name.substr(0, 2) == "./") name.remove_prefix(2);
  return name;
}

}  // namespace

TargetStore::TargetStore(fs::path root, size_t readahead_workers)
    : root_(std::move(root)), tmp_dir_(root_ / kTmpDirName) {
  std::error_code ec;
  fs::create_directories(tmp_dir_, ec);
  if (ec) {
    throw StoreError("cannot create store root " + root_.string() + ": " +
                     ec.message());
  }
  readahead_pool_ = std::make_unique<ThreadPool>(readahead_workers);
}

TargetStore::~TargetStore() = default;

std::optional<fs::path> TargetStore::object_path(
    std::string_view bucket, std::string_view objname) const {
  if (!valid_component(bucket) || bucket.find('/') != std::string_view::npos ||
      bucket == kTmpDirName) {
    return std::nullopt;
  }
  // Every component is checked, so no "." or ".." can lift the path above
  // the root.
  size_t start = 0;
  while (start <= objname.size()) {
    auto slash = objname.find('/', start);
    auto comp = objname.substr(start, slash == std::string_view::npos
                                          ? std::string_view::npos
                                          : slash - start);
    if (!valid_component(comp)) return std::nullopt;
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  std::string p = root_.native();
  p.reserve(p.size() + bucket.size() + objname.size() + 2);
  p += '/';
  p += bucket;
  p += '/';
  p += objname;
  return fs::path(std::move(p));
}

uint64_t TargetStore::put_object(const ObjectRef& ref,
                                 std::string_view content) {
  if (ref.archpath) {
    throw InvalidObjectName("cannot PUT an archive member");
  }
  auto path = object_path(ref.bucket, ref.objname);
  if (!path) {
    throw InvalidObjectName("invalid object name '" + ref.bucket + "/" +
                            ref.objname + "'");
  }
  std::error_code ec;
  fs::create_directories(path->parent_path(), ec);
  if (ec) {
    throw StoreError("mkdir " + path->parent_path().string() + ": " +
                     ec.message());
  }

  static std::atomic<uint64_t> tmp_seq{0};
  fs::path tmp = tmp_dir_ / (std::to_string(::getpid()) + "." +
                             std::to_string(tmp_seq.fetch_add(1)));
  Fd fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
  if (fd.get() < 0) throw StoreError(errno_message("create", tmp));

  size_t done = 0;
  while (done < content.size()) {
    ssize_t n = ::write(fd.get(), content.data() + done, content.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      auto msg = errno_message("write", tmp);
      ::unlink(tmp.c_str());
      throw StoreError(msg);
    }
    done += static_cast<size_t>(n);
  }
  if (::fdatasync(fd.get()) != 0 || ::close(fd.release()) != 0) {
    auto msg = errno_message("sync", tmp);
    ::unlink(tmp.c_str());
    throw StoreError(msg);
  }
  if (::rename(tmp.c_str(), path->c_str()) != 0) {
    auto msg = errno_message("rename to", *path);
    ::unlink(tmp.c_str());
    throw StoreError(msg);
  }
  return content.size();
}

ReadResult TargetStore::read_local(const ObjectRef& ref) const {
  auto path = object_path(ref.bucket, ref.objname);
  if (!path) return ReadResult::failure(kReasonNotFound);

  Fd fd(::open(path->c_str(), O_RDONLY | O_CLOEXEC));
  if (fd.get() < 0) {
    if (errno == ENOENT || errno == ENOTDIR || errno == ENAMETOOLONG) {
      return ReadResult::failure(kReasonNotFound);
    }
    throw StoreError(errno_message("open", *path));
  }
  struct stat st;
  if (::fstat(fd.get(), &st) != 0) throw StoreError(errno_message("stat", *path));
  if (!S_ISREG(st.st_mode)) return ReadResult::failure(kReasonNotFound);

  if (ref.archpath) return read_member(fd.get(), *ref.archpath);

  std::string bytes(static_cast<size_t>(st.st_size), '\0');
  size_t got = pread_full(fd.get(), bytes.data(), bytes.size(), 0, *path);
  bytes.resize(got);
  return ReadResult::success(std::move(bytes));
}

// Linear scan; there is no member index.
ReadResult TargetStore::read_member(int fd, const std::string& archpath) const {
  const fs::path label("<archive>");
  const auto wanted = strip_dot_slash(archpath);
  std::string block(tar::kBlockSize, '\0');
  uint64_t offset = 0;
  std::optional<std::string> long_name;
  std::optional<std::string> pax_path;
  std::optional<uint64_t> pax_size;
  bool any_header = false;

  for (;;) {
    if (pread_full(fd, block.data(), block.size(), offset, label) !=
        block.size()) {
      return ReadResult::failure(any_header ? kReasonMemberNotFound
                                            : kReasonBadArchive);
    }
    tar::TarHeader h;
    tar::HeaderStatus status;
    try {
      status = tar::decode_header(block, h);
    } catch (const tar::TarFormatError&) {
      return ReadResult::failure(kReasonBadArchive);
    }
    if (status == tar::HeaderStatus::kBadChecksum) {
      return ReadResult::failure(kReasonBadArchive);
    }
    if (status == tar::HeaderStatus::kZeroBlock) {
      return ReadResult::failure(any_header ? kReasonMemberNotFound
                                            : kReasonBadArchive);
    }
    any_header = true;
    uint64_t data_offset = offset + tar::kBlockSize;

    if (h.typeflag == 'x' || h.typeflag == 'L' || h.typeflag == 'g') {
      std::string data(static_cast<size_t>(h.size), '\0');
      if (pread_full(fd, data.data(), data.size(), data_offset, label) !=
          data.size()) {
        return ReadResult::failure(kReasonBadArchive);
      }
      if (h.typeflag == 'L') {
        long_name = data.substr(0, data.find('\0'));
      } else if (h.typeflag == 'x') {
        try {
          for (auto& [k, v] : tar::parse_pax_records(data)) {
            if (k == "path") pax_path = v;
            if (k == "size") pax_size = std::stoull(v);
          }
        } catch (const std::exception&) {
          return ReadResult::failure(kReasonBadArchive);
        }
      }
      offset = data_offset + tar::padded_size(h.size);
      continue;
    }

    std::string name = pax_path ? *pax_path : long_name ? *long_name : h.name;
    uint64_t size = pax_size ? *pax_size : h.size;
    pax_path.reset();
    pax_size.reset();
    long_name.reset();

    bool regular = h.typeflag == '0' || h.typeflag == '7';
    if (regular && strip_dot_slash(name) == wanted) {
      std::string bytes(static_cast<size_t>(size), '\0');
      if (pread_full(fd, bytes.data(), bytes.size(), data_offset, label) !=
          bytes.size()) {
        return ReadResult::failure(kReasonBadArchive);
      }
      return ReadResult::success(std::move(bytes));
    }
    offset = data_offset + tar::padded_size(size);
  }
}

void TargetStore::readahead(std::span<const ObjectRef> entries,
                            std::shared_ptr<const std::atomic<size_t>> claimed) {
  auto list = std::make_shared<std::vector<std::optional<fs::path>>>();
  list->reserve(entries.size());
  for (const auto& e : entries) list->push_back(object_path(e.bucket, e.objname));
  // One task per worker over a shared list keeps wakeups per batch, not
  // per file.
  auto cursor = std::make_shared<std::atomic<size_t>>(0);
  size_t tasks = std::min(readahead_pool_->size(), list->size());
  for (size_t t = 0; t < tasks; ++t) {
    readahead_pool_->submit([list, cursor, claimed] {
      for (size_t i = (*cursor)++; i < list->size(); i = (*cursor)++) {
        if (claimed && claimed->load(std::memory_order_relaxed) > i) {
          // Readers have overtaken us; everything left behind them is moot.
          size_t c = claimed->load(std::memory_order_relaxed);
          size_t cur = cursor->load();
          while (cur < c && !cursor->compare_exchange_weak(cur, c)) {
          }
          continue;
        }
        if (!(*list)[i]) continue;
        Fd fd(::open((*list)[i]->c_str(), O_RDONLY | O_CLOEXEC));
        if (fd.get() < 0) continue;
        // Starts page-cache fill without copying anything to user space.
        ::posix_fadvise(fd.get(), 0, 0, POSIX_FADV_WILLNEED);
      }
    });
  }
}

void TargetStore::wait_readahead_idle() { readahead_pool_->wait_idle(); }

std::optional<uint64_t> TargetStore::object_size(const ObjectRef& ref) const {
  auto path = object_path(ref.bucket, ref.objname);
  if (!path) return std::nullopt;
  struct stat st;
  if (::stat(path->c_str(), &st) != 0 || !S_ISREG(st.st_mode)) {
    return std::nullopt;
  }
  return static_cast<uint64_t>(st.st_size);
}

}  // namespace gbstore
