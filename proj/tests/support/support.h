#ifndef GBSTORE_TESTS_SUPPORT_H_
#define GBSTORE_TESTS_SUPPORT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gbstore/core/model.h"
#include "gbstore/harness/config.h"
#include "gbstore/loadgen/client.h"
#include "gbstore/node/node.h"

namespace gbstore::testing {

/// Fresh directory under $TMPDIR, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& sub) const { return path_ / sub; }

 private:
  std::filesystem::path path_;
};

// Reference TAR reader, written from the POSIX ustar/pax layout and kept
// free of any code shared with the tar-stream module.
struct RefEntry {
  std::string name;
  char typeflag = '0';
  std::string payload;
  std::map<std::string, std::string> pax;
};

struct RefArchive {
  std::vector<RefEntry> entries;
  bool ok = false;
  std::string error;  // first problem found; empty when ok
};

/// Full pax-aware parse. Checks header checksums, the ustar magic, zero
/// padding, the two-block terminator and that the length is a multiple of
/// 512 with nothing after the terminator.
RefArchive ref_read_tar(std::string_view bytes);

/// Plain ustar reader that knows nothing of pax: 'x' headers come back as
/// ordinary entries.
RefArchive ustar_only_read(std::string_view bytes);

/// Builds a ustar archive without the tar-stream module.
std::string ref_write_tar(const std::vector<std::pair<std::string, std::string>>& files);

std::string random_bytes(std::mt19937_64& rng, size_t n);
std::string random_name(std::mt19937_64& rng, size_t min_len, size_t max_len);

/// Nearest-rank percentile by full sort and integer arithmetic on
/// per-mille q.
double sorted_percentile(std::vector<double> samples, int q_per_mille);

/// All nodes of a local cluster running inside this process.
class InProcCluster {
 public:
  InProcCluster(size_t proxies, size_t targets, Tuning tuning = {});
  ~InProcCluster();

  const ClusterConfig& config() const { return config_; }
  std::string gateway_url() const;
  TargetNode& target(size_t i);
  TargetNode& target(const NodeId& id);
  ProxyNode& proxy(size_t i = 0);
  size_t target_count() const { return config_.targets.size(); }
  ClusterMapPtr map() const;

  /// Sum of one counter across every node.
  uint64_t total(Counter c);
  MetricsSnapshot totals();

  /// Stops a target (HTTP and peer listener); restart brings it back with
  /// the same store.
  void stop_target(const NodeId& id);
  void restart_target(const NodeId& id);

 private:
  TempDir dir_;
  ClusterConfig config_;
  std::map<NodeId, std::unique_ptr<Node>> nodes_;
};

/// Reads `name` from the gateway with the per-object GET path.
std::optional<std::string> get_via_gateway(GatewayClient& client, const ObjectRef& ref);

std::filesystem::path node_binary();
std::filesystem::path tool_binary(const std::string& name);

}  // namespace gbstore::testing

#endif  // GBSTORE_TESTS_SUPPORT_H_
