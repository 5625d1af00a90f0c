#ifndef GBSTORE_PLACEMENT_PLACEMENT_H_
#define GBSTORE_PLACEMENT_PLACEMENT_H_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gbstore/core/model.h"

namespace gbstore {

using NodeId = std::string;

enum class NodeRole { kProxy, kTarget };

struct NodeInfo {
  NodeId id;
  std::string endpoint;       // HTTP host:port
  NodeRole role = NodeRole::kTarget;
  std::string peer_endpoint;  // frame transport host:port (targets only)

  friend bool operator==(const NodeInfo&, const NodeInfo&) = default;
};

class ClusterMapError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Immutable, versioned membership snapshot. Targets and proxies are kept
/// sorted by id.
class ClusterMap {
 public:
  ClusterMap(uint64_t version, std::vector<NodeInfo> targets,
             std::vector<NodeInfo> proxies);

  uint64_t version() const { return version_; }
  const std::vector<NodeInfo>& targets() const { return targets_; }
  const std::vector<NodeInfo>& proxies() const { return proxies_; }

  const NodeInfo* find_target(const NodeId& id) const;
  const NodeInfo* find(const NodeId& id) const;

  /// Same nodes and endpoints, version ignored.
  bool same_membership(const ClusterMap& other) const;

 private:
  uint64_t version_;
  std::vector<NodeInfo> targets_;
  std::vector<NodeInfo> proxies_;
};

using ClusterMapPtr = std::shared_ptr<const ClusterMap>;

/// Publishes map snapshots. A new snapshot gets version+1 only when the
/// membership differs from the current one.
class ClusterMapHolder {
 public:
  explicit ClusterMapHolder(ClusterMap initial);

  ClusterMapPtr snapshot() const;
  ClusterMapPtr publish(std::vector<NodeInfo> targets,
                        std::vector<NodeInfo> proxies);

 private:
  mutable std::mutex mu_;
  ClusterMapPtr current_;
};

/// Rendezvous score of `node` for the ownership key of `ref`. The archive
/// member path is not part of the key, so all members of a shard share an
/// owner.
uint64_t ownership_score(const NodeId& node, const ObjectRef& ref);

NodeId owner_of(const ClusterMap& map, const ObjectRef& ref);

/// HRW over the proxy-generated request id; never looks at the body.
NodeId select_dt_default(const ClusterMap& map, const ExecutionId& request_id);

/// Target owning the most entries; ties go to the smallest node id.
NodeId select_dt_colocated(const ClusterMap& map,
                           std::span<const ObjectRef> entries);

struct IndexedRef {
  uint32_t index;
  ObjectRef ref;
};

/// Every index lands in exactly one owner's list; indices ascend per list.
std::map<NodeId, std::vector<IndexedRef>> partition_entries(
    const ClusterMap& map, std::span<const ObjectRef> entries);

}  // namespace gbstore

#endif  // GBSTORE_PLACEMENT_PLACEMENT_H_
