#ifndef GBSTORE_PROXY_GATEWAY_H_
#define GBSTORE_PROXY_GATEWAY_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "gbstore/core/model.h"
#include "gbstore/placement/placement.h"
#include "gbstore/transport/frame.h"
#include "gbstore/util/thread_pool.h"

namespace gbstore {

struct RegisterOutcome {
  enum class Kind { kRegistered, kRejected, kBadRequest, kUnavailable };
  Kind kind = Kind::kRegistered;
  std::string message;
};

/// Phase-1 call to the chosen DT.
class DtClient {
 public:
  virtual ~DtClient() = default;
  virtual RegisterOutcome register_execution(const NodeInfo& dt,
                                             const ExecutionId& id,
                                             std::string_view body) = 0;
};

/// Sends one activation frame; false when the target could not be reached.
using ActivationSendFn =
    std::function<bool(const NodeInfo& target, const DeliveryFrame& frame)>;

struct GatewayOptions {
  size_t max_body_bytes = kDefaultMaxRequestBody;
  // Threads sending activation frames in parallel across all requests.
  size_t broadcast_workers = 32;
};

struct GatewayReply {
  int status = 307;
  std::string location;  // set for 307
  std::string error;     // set for non-307
  NodeId dt;
  ExecutionId exec_id;
  size_t activations_sent = 0;
  size_t activations_failed = 0;
};

/// Proxy-side GetBatch orchestration: choose a DT, register, broadcast
/// activation, redirect. Holds no per-request state once a reply is built.
class Gateway {
 public:
  Gateway(GatewayOptions options, std::function<ClusterMapPtr()> cluster_map,
          DtClient& dt_client, ActivationSendFn send_activation);
  ~Gateway();

  /// `coloc_query` is the `?coloc=` value when present. Without it the body
  /// is only inspected for a `coloc` key by a substring probe; it is parsed
  /// only when colocation is requested.
  GatewayReply handle_get_batch(std::string_view body,
                                std::optional<int64_t> coloc_query);

  /// Number of times a request body was unmarshalled.
  uint64_t body_parse_count() const { return parses_.load(); }
  size_t in_flight() const { return in_flight_.load(); }

 private:
  GatewayOptions options_;
  std::function<ClusterMapPtr()> cluster_map_;
  DtClient& dt_client_;
  ActivationSendFn send_activation_;
  std::atomic<uint64_t> parses_{0};
  std::atomic<size_t> in_flight_{0};
  std::unique_ptr<ThreadPool> broadcast_pool_;
};

}  // namespace gbstore

#endif  // GBSTORE_PROXY_GATEWAY_H_
