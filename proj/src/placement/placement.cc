#include "gbstore/placement/placement.h"

#include <algorithm>
#include <set>

#include "gbstore/util/hash.h"

namespace gbstore {
namespace {

void sort_by_id(std::vector<NodeInfo>& nodes) {
  std::sort(nodes.begin(), nodes.end(),
            [](const NodeInfo& a, const NodeInfo& b) { return a.id < b.id; });
}

// Highest score wins; equal scores resolve to the smaller id so the result
// never depends on iteration order.
template <typename ScoreFn>
const NodeInfo& hrw_winner(const std::vector<NodeInfo>& targets,
                           ScoreFn&& score) {
  const NodeInfo* best = nullptr;
  uint64_t best_score = 0;
  for (const auto& node : targets) {
    uint64_t s = score(node);
    if (best == nullptr || s > best_score ||
        (s == best_score && node.id < best->id)) {
      best = &node;
      best_score = s;
    }
  }
  return *best;
}

}  // namespace

ClusterMap::ClusterMap(uint64_t version, std::vector<NodeInfo> targets,
                       std::vector<NodeInfo> proxies)
    : version_(version),
      targets_(std::move(targets)),
      proxies_(std::move(proxies)) {
  if (targets_.empty()) throw ClusterMapError("cluster map has no targets");
  if (proxies_.empty()) throw ClusterMapError("cluster map has no proxies");
  std::set<NodeId> seen;
  for (auto* group : {&targets_, &proxies_}) {
    for (const auto& n : *group) {
      if (n.id.empty()) throw ClusterMapError("empty node id");
      if (!seen.insert(n.id).second) {
        throw ClusterMapError("duplicate node id '" + n.id + "'");
      }
    }
  }
  for (auto& t : targets_) t.role = NodeRole::kTarget;
  for (auto& p : proxies_) p.role = NodeRole::kProxy;
  sort_by_id(targets_);
  sort_by_id(proxies_);
}

const NodeInfo* ClusterMap::find_target(const NodeId& id) const {
  auto it = std::lower_bound(
      targets_.begin(), targets_.end(), id,
      [](const NodeInfo& n, const NodeId& key) { return n.id < key; });
  return it != targets_.end() && it->id == id ? &*it : nullptr;
}

const NodeInfo* ClusterMap::find(const NodeId& id) const {
  if (auto* t = find_target(id)) return t;
  for (const auto& p : proxies_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

bool ClusterMap::same_membership(const ClusterMap& other) const {
  return targets_ == other.targets_ && proxies_ == other.proxies_;
}

ClusterMapHolder::ClusterMapHolder(ClusterMap initial)
    : current_(std::make_shared<const ClusterMap>(std::move(initial))) {}

ClusterMapPtr ClusterMapHolder::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

ClusterMapPtr ClusterMapHolder::publish(std::vector<NodeInfo> targets,
                                        std::vector<NodeInfo> proxies) {
  std::lock_guard lock(mu_);
  auto next = std::make_shared<const ClusterMap>(
      current_->version() + 1, std::move(targets), std::move(proxies));
  if (!next->same_membership(*current_)) current_ = std::move(next);
  return current_;
}

uint64_t ownership_score(const NodeId& node, const ObjectRef& ref) {
  return hash64({node, ref.bucket, ref.objname});
}

NodeId owner_of(const ClusterMap& map, const ObjectRef& ref) {
  return hrw_winner(map.targets(), [&](const NodeInfo& n) {
           return ownership_score(n.id, ref);
         }).id;
}

NodeId select_dt_default(const ClusterMap& map, const ExecutionId& request_id) {
  const auto& raw = request_id.bytes();
  std::string_view key(reinterpret_cast<const char*>(raw.data()), raw.size());
  return hrw_winner(map.targets(), [&](const NodeInfo& n) {
           return hash64({n.id, key});
         }).id;
}

NodeId select_dt_colocated(const ClusterMap& map,
                           std::span<const ObjectRef> entries) {
  std::map<NodeId, size_t> counts;
  for (const auto& e : entries) ++counts[owner_of(map, e)];
  // std::map iterates ids ascending, so strict '>' keeps the smallest id.
  NodeId best = map.targets().front().id;
  size_t best_count = 0;
  for (const auto& [id, count] : counts) {
    if (count > best_count) {
      best = id;
      best_count = count;
    }
  }
  return best;
}

std::map<NodeId, std::vector<IndexedRef>> partition_entries(
    const ClusterMap& map, std::span<const ObjectRef> entries) {
  std::map<NodeId, std::vector<IndexedRef>> out;
  for (uint32_t i = 0; i < entries.size(); ++i) {
    out[owner_of(map, entries[i])].push_back({i, entries[i]});
  }
  return out;
}

}  // namespace gbstore
