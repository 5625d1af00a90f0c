#ifndef GBSTORE_TRANSPORT_PEER_H_
#define GBSTORE_TRANSPORT_PEER_H_

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "gbstore/transport/frame.h"

namespace gbstore {

/// Connect or send failure. Callers treat it as a soft, transient error.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PeerPoolOptions {
  size_t max_conns_per_peer = 8;
  std::chrono::milliseconds idle_timeout{60'000};
  std::chrono::milliseconds connect_timeout{2'000};
  // Bounds both a blocked write and the wait for a free connection slot.
  std::chrono::milliseconds send_timeout{10'000};
};

/// Shared pool of persistent outbound frame connections, keyed by the
/// destination's peer endpoint (host:port). Each connection carries frames
/// from many executions; a frame is written under exclusive ownership of
/// one connection, so frames on a connection stay in send order.
class PeerPool {
 public:
  using Clock = std::chrono::steady_clock;

  explicit PeerPool(PeerPoolOptions options = {});
  ~PeerPool();

  PeerPool(const PeerPool&) = delete;
  PeerPool& operator=(const PeerPool&) = delete;

  /// Throws TransportError. With `fresh_connection` the pooled idle
  /// connections are skipped and a new one is dialed.
  void send_frame(const std::string& dest, const DeliveryFrame& frame,
                  bool fresh_connection = false);

  /// Several frames back to back on one connection with as few syscalls as
  /// the iovec limit allows. On failure a prefix may have been delivered.
  void send_frames(const std::string& dest, std::span<const DeliveryFrame> frames,
                   bool fresh_connection = false);

  /// Closes connections idle for longer than idle_timeout as of `now`.
  size_t reclaim_idle(Clock::time_point now);

  size_t connection_count(const std::string& dest) const;
  size_t peak_connection_count(const std::string& dest) const;
  size_t total_connections() const;
  uint64_t dial_count() const { return dials_.load(); }

  const PeerPoolOptions& options() const { return options_; }

 private:
  struct Conn {
    int fd;
    Clock::time_point last_used;
  };
  struct Peer {
    std::vector<Conn> idle;
    size_t open = 0;  // idle + in use
    size_t peak = 0;
  };

  int acquire(const std::string& dest, bool fresh);
  void release(const std::string& dest, int fd, bool healthy);
  int dial(const std::string& dest);

  PeerPoolOptions options_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Peer> peers_;
  std::atomic<uint64_t> dials_{0};
};

using FrameHandler = std::function<void(DeliveryFrame&&)>;

/// Accepts frame connections and hands every decoded frame to `handler`
/// on the connection's reader thread.
class PeerServer {
 public:
  PeerServer(std::string bind_host, uint16_t port, FrameHandler handler);
  ~PeerServer();

  PeerServer(const PeerServer&) = delete;
  PeerServer& operator=(const PeerServer&) = delete;

  /// Binds and starts accepting. Throws TransportError if the bind fails.
  void start();
  void stop();

  uint16_t port() const { return port_; }
  size_t open_connections() const;
  uint64_t frames_received() const { return frames_received_.load(); }

 private:
  struct Connection {
    int fd;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void accept_loop();
  void serve(int fd);
  void reap_finished_locked();

  std::string bind_host_;
  uint16_t port_;
  FrameHandler handler_;
  int listen_fd_ = -1;
  std::thread accept_thread_;
  std::atomic<bool> stopping_{false};
  mutable std::mutex mu_;
  std::list<Connection> connections_;
  std::atomic<uint64_t> frames_received_{0};
};

}  // namespace gbstore

#endif  // GBSTORE_TRANSPORT_PEER_H_
