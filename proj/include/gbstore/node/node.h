#ifndef GBSTORE_NODE_NODE_H_
#define GBSTORE_NODE_NODE_H_

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "gbstore/dt/dt_engine.h"
#include "gbstore/harness/config.h"
#include "gbstore/metrics/admission.h"
#include "gbstore/metrics/metrics.h"
#include "gbstore/node/faults.h"
#include "gbstore/placement/placement.h"
#include "gbstore/proxy/gateway.h"
#include "gbstore/sender/sender_engine.h"
#include "gbstore/store/target_store.h"
#include "gbstore/transport/peer.h"
#include "gbstore/util/http_pool.h"

namespace httplib {
class Server;
}

namespace gbstore {

struct NodeOptions {
  ClusterConfig config;
  // Re-read by /v1/cluster/reload; empty disables reloading.
  std::filesystem::path config_path;
  NodeId id;
  // Enables /v1/debug/* (fault injection, pressure override, stats).
  bool debug_hooks = false;
  bool sample_pressure = true;
  size_t http_threads = 64;
};

std::string cluster_map_to_json(const ClusterMap& map);
ClusterMap cluster_map_from_json(const std::string& json);

/// Shared HTTP plumbing: listener thread, cluster map, metrics, health.
class Node {
 public:
  explicit Node(NodeOptions options);
  virtual ~Node();

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  /// Binds every listener and starts serving. Throws std::runtime_error
  /// when a port cannot be bound.
  virtual void start();
  virtual void stop();

  const NodeId& id() const { return options_.id; }
  uint16_t http_port() const { return http_port_; }
  MetricsRegistry& metrics() { return metrics_; }
  ClusterMapPtr cluster_map() const { return map_.snapshot(); }

  /// Re-reads the config file and publishes the new membership.
  ClusterMapPtr reload();

 protected:
  virtual void install_routes(httplib::Server& server) = 0;
  virtual void housekeeping() {}

  NodeOptions options_;
  ClusterMapHolder map_;
  MetricsRegistry metrics_;

 private:
  void housekeeping_loop();

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  std::thread housekeeping_thread_;
  std::mutex hk_mu_;
  std::condition_variable hk_cv_;
  bool stopping_ = false;
  bool started_ = false;
  uint16_t http_port_ = 0;
};

class TargetNode : public Node {
 public:
  explicit TargetNode(NodeOptions options);
  ~TargetNode() override;

  void start() override;
  void stop() override;

  DtEngine& dt() { return *dt_; }
  SenderEngine& sender() { return *sender_; }
  TargetStore& store() { return *store_; }
  FaultInjector& faults() { return faults_; }
  PressureSource& pressure() { return *pressure_; }
  PeerPool& peer_pool() { return *peer_pool_; }
  uint16_t peer_port() const;

 protected:
  void install_routes(httplib::Server& server) override;
  void housekeeping() override;

 private:
  void on_frame(DeliveryFrame&& frame);
  std::optional<DeliveryFrame> pull(const NodeInfo& node, const ExecutionId& exec,
                                    uint32_t index, const ObjectRef& ref);

  const NodeConfig* self_;
  FaultInjector faults_;
  std::unique_ptr<PressureSource> pressure_;
  std::unique_ptr<TargetStore> store_;
  std::unique_ptr<PeerPool> peer_pool_;
  std::unique_ptr<HttpClientPool> pull_clients_;
  std::unique_ptr<DtEngine> dt_;
  std::unique_ptr<SenderEngine> sender_;
  std::unique_ptr<PeerServer> peer_server_;
};

class ProxyNode : public Node {
 public:
  explicit ProxyNode(NodeOptions options);
  ~ProxyNode() override;

  Gateway& gateway() { return *gateway_; }
  PeerPool& peer_pool() { return *peer_pool_; }

 protected:
  void install_routes(httplib::Server& server) override;
  void housekeeping() override;

 private:
  class HttpDtClient;

  std::unique_ptr<PeerPool> peer_pool_;
  std::unique_ptr<HttpClientPool> clients_;
  std::unique_ptr<HttpDtClient> dt_client_;
  std::unique_ptr<Gateway> gateway_;
};

/// Builds the node named `options.id` with the role the config gives it.
std::unique_ptr<Node> make_node(NodeOptions options);

}  // namespace gbstore

#endif  // GBSTORE_NODE_NODE_H_
