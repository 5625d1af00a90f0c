#ifndef GBSTORE_HARNESS_HARNESS_H_
#define GBSTORE_HARNESS_HARNESS_H_

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

#include "gbstore/harness/config.h"

namespace gbstore {

class LaunchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Config for `targets` targets and `proxies` proxies on free loopback
/// ports, with store roots under `root`.
ClusterConfig make_local_config(size_t proxies, size_t targets,
                                const std::filesystem::path& root,
                                Tuning tuning = {});

struct SpawnOptions {
  std::filesystem::path node_binary;
  std::filesystem::path config_path;
  std::filesystem::path log_path;
  bool debug_hooks = true;
  // Child gets SIGKILL when the spawning thread's process exits.
  bool tie_to_parent = true;
};

pid_t spawn_node(const SpawnOptions& options, const NodeId& id);

/// Polls GET /health on `endpoint` until it answers 200.
bool wait_healthy(const std::string& endpoint, std::chrono::milliseconds timeout);

/// SIGTERM, then SIGKILL after `grace`. Reaps the child when it is ours.
void stop_process(pid_t pid, std::chrono::milliseconds grace);

bool process_alive(pid_t pid);

struct LaunchOptions {
  std::filesystem::path node_binary;
  // Holds the written config and node logs.
  std::filesystem::path work_dir;
  bool debug_hooks = true;
  std::chrono::milliseconds startup_timeout{15'000};
  // Keep store roots and logs after teardown.
  bool keep = false;
};

/// Multi-process cluster on loopback. Each node is a separate gbnode
/// process; handle operations are serialized.
class ClusterHandle {
 public:
  /// Throws LaunchError with the failing node's log on startup failure.
  static std::unique_ptr<ClusterHandle> launch(ClusterConfig config,
                                               LaunchOptions options);
  ~ClusterHandle();

  ClusterHandle(const ClusterHandle&) = delete;
  ClusterHandle& operator=(const ClusterHandle&) = delete;

  void kill(const NodeId& id);
  void restart(const NodeId& id);
  void teardown();

  /// Rewrites the config file (e.g. after adding a target) and asks every
  /// running node to reload it.
  void rewrite_config(const ClusterConfig& config);

  const ClusterConfig& config() const { return config_; }
  const std::filesystem::path& config_path() const { return config_path_; }
  std::string gateway_url() const;
  std::string endpoint(const NodeId& id) const;
  bool alive(const NodeId& id) const;
  std::string logs(const NodeId& id) const;

 private:
  ClusterHandle(ClusterConfig config, LaunchOptions options);
  void start_node(const NodeId& id);

  ClusterConfig config_;
  LaunchOptions options_;
  std::filesystem::path config_path_;
  mutable std::mutex mu_;
  std::map<NodeId, pid_t> pids_;
  bool torn_down_ = false;
};

}  // namespace gbstore

#endif  // GBSTORE_HARNESS_HARNESS_H_
