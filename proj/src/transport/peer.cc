#include "gbstore/transport/peer.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <climits>
#include <cstring>
#include <vector>

#include "gbstore/util/log.h"
#include "gbstore/util/net.h"

namespace gbstore {
namespace {

constexpr uint64_t kMaxFramePayload = uint64_t{4} << 30;

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

void set_timeout(int fd, int opt, std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, opt, &tv, sizeof(tv));
}

// The receiving side never writes, so a readable socket means EOF or error.
bool connection_alive(int fd) {
  pollfd p{fd, POLLIN, 0};
  int r = ::poll(&p, 1, 0);
  return r == 0;
}

bool send_all(int fd, iovec* iov, int iovcnt) {
  while (iovcnt > 0) {
    msghdr msg{};
    msg.msg_iov = iov;
    msg.msg_iovlen = static_cast<size_t>(iovcnt);
    ssize_t n = ::sendmsg(fd, &msg, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    auto left = static_cast<size_t>(n);
    while (iovcnt > 0 && left >= iov->iov_len) {
      left -= iov->iov_len;
      ++iov;
      --iovcnt;
    }
    if (iovcnt > 0) {
      iov->iov_base = static_cast<char*>(iov->iov_base) + left;
      iov->iov_len -= left;
    }
  }
  return true;
}

bool recv_all(int fd, char* buf, size_t len) {
  size_t done = 0;
  while (done < len) {
    ssize_t n = ::recv(fd, buf + done, len - done, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (n == 0) return false;
    done += static_cast<size_t>(n);
  }
  return true;
}

// Reads through a fixed buffer so small frames cost one recv per batch of
// frames rather than three.
class BufferedReader {
 public:
  explicit BufferedReader(int fd) : fd_(fd), buf_(new char[kCapacity]) {}

  bool read(char* out, size_t len) {
    size_t avail = end_ - pos_;
    if (avail >= len) {
      std::memcpy(out, buf_.get() + pos_, len);
      pos_ += len;
      return true;
    }
    std::memcpy(out, buf_.get() + pos_, avail);
    pos_ = end_ = 0;
    out += avail;
    len -= avail;
    if (len >= kCapacity) return recv_all(fd_, out, len);
    while (end_ < len) {
      ssize_t n = ::recv(fd_, buf_.get() + end_, kCapacity - end_, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      if (n == 0) return false;
      end_ += static_cast<size_t>(n);
    }
    std::memcpy(out, buf_.get(), len);
    pos_ = len;
    return true;
  }

 private:
  static constexpr size_t kCapacity = 256 * 1024;
  int fd_;
  std::unique_ptr<char[]> buf_;
  size_t pos_ = 0;
  size_t end_ = 0;
};

}  // namespace

PeerPool::PeerPool(PeerPoolOptions options) : options_(options) {
  if (options_.max_conns_per_peer == 0) options_.max_conns_per_peer = 1;
}

PeerPool::~PeerPool() {
  std::lock_guard lock(mu_);
  for (auto& [dest, peer] : peers_) {
    for (auto& c : peer.idle) ::close(c.fd);
  }
}

int PeerPool::dial(const std::string& dest) {
  auto hp = parse_host_port(dest);
  if (!hp) throw TransportError("bad peer endpoint '" + dest + "'");
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(hp->host.c_str(), std::to_string(hp->port).c_str(), &hints,
                    &res) != 0 ||
      res == nullptr) {
    throw TransportError("cannot resolve " + dest);
  }
  int fd = ::socket(res->ai_family, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw TransportError("socket(): " + std::string(std::strerror(errno)));
  }
  int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 && errno != EINPROGRESS) {
    int err = errno;
    ::close(fd);
    throw TransportError("connect " + dest + ": " + std::strerror(err));
  }
  if (rc != 0) {
    pollfd p{fd, POLLOUT, 0};
    int r = ::poll(&p, 1, static_cast<int>(options_.connect_timeout.count()));
    int err = 0;
    socklen_t len = sizeof(err);
    if (r <= 0 || ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0 ||
        err != 0) {
      ::close(fd);
      throw TransportError("connect " + dest + ": " +
                           (r == 0 ? std::string("timed out")
                                   : std::string(std::strerror(err))));
    }
  }
  ::fcntl(fd, F_SETFL, flags & ~O_NONBLOCK);
  set_nodelay(fd);
  set_timeout(fd, SO_SNDTIMEO, options_.send_timeout);
  dials_.fetch_add(1);
  return fd;
}

int PeerPool::acquire(const std::string& dest, bool fresh) {
  std::unique_lock lock(mu_);
  auto deadline = Clock::now() + options_.send_timeout;
  for (;;) {
    Peer& peer = peers_[dest];
    if (!fresh) {
      while (!peer.idle.empty()) {
        Conn c = peer.idle.back();
        peer.idle.pop_back();
        if (connection_alive(c.fd)) return c.fd;
        ::close(c.fd);
        --peer.open;
        cv_.notify_all();
      }
    } else if (peer.open >= options_.max_conns_per_peer && !peer.idle.empty()) {
      // Make room for the fresh dial by retiring an idle connection.
      ::close(peer.idle.front().fd);
      peer.idle.erase(peer.idle.begin());
      --peer.open;
    }
    if (peer.open < options_.max_conns_per_peer) {
      ++peer.open;
      peer.peak = std::max(peer.peak, peer.open);
      lock.unlock();
      try {
        return dial(dest);
      } catch (...) {
        lock.lock();
        --peers_[dest].open;
        cv_.notify_all();
        throw;
      }
    }
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
      throw TransportError("no free connection to " + dest);
    }
  }
}

void PeerPool::release(const std::string& dest, int fd, bool healthy) {
  std::lock_guard lock(mu_);
  Peer& peer = peers_[dest];
  if (healthy) {
    peer.idle.push_back({fd, Clock::now()});
  } else {
    ::close(fd);
    --peer.open;
  }
  cv_.notify_all();
}

void PeerPool::send_frame(const std::string& dest, const DeliveryFrame& frame,
                          bool fresh_connection) {
  std::string header = encode_frame_header(frame);
  int fd = acquire(dest, fresh_connection);
  iovec iov[3];
  iov[0] = {header.data(), header.size()};
  iov[1] = {const_cast<char*>(frame.reason.data()), frame.reason.size()};
  iov[2] = {const_cast<char*>(frame.payload.data()), frame.payload.size()};
  bool ok = send_all(fd, iov, 3);
  int err = errno;
  release(dest, fd, ok);
  if (!ok) {
    throw TransportError("send to " + dest + ": " + std::strerror(err));
  }
}

void PeerPool::send_frames(const std::string& dest,
                           std::span<const DeliveryFrame> frames,
                           bool fresh_connection) {
  if (frames.empty()) return;
  std::vector<std::string> headers;
  headers.reserve(frames.size());
  std::vector<iovec> iov;
  iov.reserve(frames.size() * 3);
  for (const auto& f : frames) {
    headers.push_back(encode_frame_header(f));
    iov.push_back({headers.back().data(), headers.back().size()});
    if (!f.reason.empty()) iov.push_back({const_cast<char*>(f.reason.data()), f.reason.size()});
    if (!f.payload.empty()) {
      iov.push_back({const_cast<char*>(f.payload.data()), f.payload.size()});
    }
  }
  int fd = acquire(dest, fresh_connection);
  bool ok = true;
  for (size_t off = 0; ok && off < iov.size(); off += IOV_MAX) {
    int n = static_cast<int>(std::min<size_t>(IOV_MAX, iov.size() - off));
    ok = send_all(fd, iov.data() + off, n);
  }
  int err = errno;
  release(dest, fd, ok);
  if (!ok) {
    throw TransportError("send to " + dest + ": " + std::strerror(err));
  }
}

size_t PeerPool::reclaim_idle(Clock::time_point now) {
  std::lock_guard lock(mu_);
  size_t closed = 0;
  for (auto& [dest, peer] : peers_) {
    auto& idle = peer.idle;
    for (auto it = idle.begin(); it != idle.end();) {
      if (now - it->last_used > options_.idle_timeout) {
        ::close(it->fd);
        --peer.open;
        ++closed;
        it = idle.erase(it);
      } else {
        ++it;
      }
    }
  }
  if (closed > 0) cv_.notify_all();
  return closed;
}

size_t PeerPool::connection_count(const std::string& dest) const {
  std::lock_guard lock(mu_);
  auto it = peers_.find(dest);
  return it == peers_.end() ? 0 : it->second.open;
}

size_t PeerPool::peak_connection_count(const std::string& dest) const {
  std::lock_guard lock(mu_);
  auto it = peers_.find(dest);
  return it == peers_.end() ? 0 : it->second.peak;
}

size_t PeerPool::total_connections() const {
  std::lock_guard lock(mu_);
  size_t n = 0;
  for (const auto& [dest, peer] : peers_) n += peer.open;
  return n;
}

PeerServer::PeerServer(std::string bind_host, uint16_t port,
                       FrameHandler handler)
    : bind_host_(std::move(bind_host)), port_(port),
      handler_(std::move(handler)) {}

PeerServer::~PeerServer() { stop(); }

void PeerServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw TransportError("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (bind_host_.empty() || bind_host_ == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (bind_host_ == "localhost") {
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  } else if (::inet_pton(AF_INET, bind_host_.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("bad bind address " + bind_host_);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) !=
          0 ||
      ::listen(listen_fd_, 128) != 0) {
    int err = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("bind " + bind_host_ + ":" + std::to_string(port_) +
                         ": " + std::strerror(err));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void PeerServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (accept_thread_.joinable()) accept_thread_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
  std::list<Connection> conns;
  {
    std::lock_guard lock(mu_);
    for (auto& c : connections_) ::shutdown(c.fd, SHUT_RDWR);
    conns.swap(connections_);
  }
  for (auto& c : conns) c.thread.join();
}

size_t PeerServer::open_connections() const {
  std::lock_guard lock(mu_);
  size_t n = 0;
  for (const auto& c : connections_) n += c.done->load() ? 0 : 1;
  return n;
}

void PeerServer::reap_finished_locked() {
  for (auto it = connections_.begin(); it != connections_.end();) {
    if (it->done->load()) {
      it->thread.join();
      it = connections_.erase(it);
    } else {
      ++it;
    }
  }
}

void PeerServer::accept_loop() {
  while (!stopping_) {
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      if (stopping_) return;
      GB_LOG(kWarning) << "peer accept failed: " << std::strerror(errno);
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      continue;
    }
    set_nodelay(fd);
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    reap_finished_locked();
    auto done = std::make_shared<std::atomic<bool>>(false);
    connections_.push_back(Connection{fd, {}, done});
    connections_.back().thread = std::thread([this, fd, done] {
      serve(fd);
      ::close(fd);
      done->store(true);
    });
  }
}

void PeerServer::serve(int fd) {
  std::string header(kFrameHeaderSize, '\0');
  BufferedReader in(fd);
  while (!stopping_) {
    if (!in.read(header.data(), header.size())) return;
    FrameHeader h;
    try {
      h = decode_frame_header(header);
    } catch (const FrameError& e) {
      GB_LOG(kWarning) << "dropping peer connection: " << e.what();
      return;
    }
    if (h.payload_len > kMaxFramePayload) {
      GB_LOG(kWarning) << "dropping peer connection: oversized frame";
      return;
    }
    DeliveryFrame f;
    f.exec_id = h.exec_id;
    f.index = h.index;
    f.status = h.status;
    f.reason.resize(h.reason_len);
    f.payload.resize(static_cast<size_t>(h.payload_len));
    if (!in.read(f.reason.data(), f.reason.size()) ||
        !in.read(f.payload.data(), f.payload.size())) {
      return;
    }
    frames_received_.fetch_add(1);
    try {
      handler_(std::move(f));
    } catch (const std::exception& e) {
      GB_LOG(kError) << "frame handler threw: " << e.what();
    }
  }
}

}  // namespace gbstore
