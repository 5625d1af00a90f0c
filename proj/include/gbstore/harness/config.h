#ifndef GBSTORE_HARNESS_CONFIG_H_
#define GBSTORE_HARNESS_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gbstore/placement/placement.h"

namespace gbstore {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what
                                    : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct Tuning {
  int64_t rxwait_timeout_ms = 10'000;
  int64_t gfn_attempts = 2;
  int64_t max_soft_errors = 8;
  int64_t readahead_workers = 4;
  int64_t idle_timeout_s = 60;
  double mem_critical = 0.90;
  double busy_threshold = 0.85;
  int64_t throttle_step_ms = 10;
  int64_t max_conns_per_peer = 8;
  int64_t connect_timeout_ms = 2'000;
  int64_t activation_timeout_ms = 2'000;
  int64_t client_wait_timeout_s = 60;
  int64_t max_body_bytes = int64_t{64} << 20;
  int64_t mem_budget_bytes = 0;  // 0 = physical memory
};

struct NodeConfig {
  NodeId id;
  std::string listen;      // host:port
  std::string peer;        // targets: frame listener; defaults to port + 1000
  std::string store_root;  // targets only
};

struct ClusterConfig {
  std::string name;
  std::vector<NodeConfig> proxies;
  std::vector<NodeConfig> targets;
  Tuning tuning;

  const NodeConfig* find(const NodeId& id) const;
  bool is_target(const NodeId& id) const;
  ClusterMap to_map(uint64_t version = 1) const;
};

/// Parses the TOML subset used for cluster files:
///
///   [cluster]
///   name = "local"
///   [[proxy]]
///   id = "p0"
///   listen = "127.0.0.1:8080"
///   [[target]]
///   id = "t0"
///   listen = "127.0.0.1:9000"
///   store_root = "/tmp/t0"
///   [tuning]
///   rxwait_timeout_ms = 10000
///
/// Relative store roots are resolved against `base_dir`.
ClusterConfig parse_config(std::string_view text,
                           const std::filesystem::path& base_dir = {});
ClusterConfig load_config(const std::filesystem::path& path);

/// Inverse of parse_config.
std::string render_config(const ClusterConfig& config);

}  // namespace gbstore

#endif  // GBSTORE_HARNESS_CONFIG_H_
