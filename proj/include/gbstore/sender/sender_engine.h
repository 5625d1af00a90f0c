#ifndef GBSTORE_SENDER_SENDER_ENGINE_H_
#define GBSTORE_SENDER_SENDER_ENGINE_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "gbstore/core/model.h"
#include "gbstore/metrics/admission.h"
#include "gbstore/metrics/metrics.h"
#include "gbstore/node/faults.h"
#include "gbstore/placement/placement.h"
#include "gbstore/store/target_store.h"
#include "gbstore/transport/frame.h"
#include "gbstore/util/thread_pool.h"

namespace gbstore {

struct SenderOptions {
  size_t max_reads_per_activation = 8;
  size_t workers = 16;
  AdmissionConfig admission;
  // A reader holds finished frames until one of these is reached, then
  // sends them in one go. Ignored without SenderDeps::send_batch.
  size_t coalesce_bytes = 256 * 1024;
  size_t coalesce_frames = 64;
  std::chrono::microseconds coalesce_window{2000};
};

/// Delivers one frame to a DT. Throws TransportError on failure; the
/// second argument asks for a freshly dialed connection.
using FrameSendFn = std::function<void(const NodeInfo& dt, const DeliveryFrame&,
                                       bool fresh_connection)>;
/// Same contract for a run of frames to one DT.
using FrameBatchSendFn = std::function<void(
    const NodeInfo& dt, std::span<const DeliveryFrame>, bool fresh_connection)>;

struct SenderDeps {
  NodeId self;
  std::function<ClusterMapPtr()> cluster_map;
  TargetStore* store = nullptr;
  MetricsRegistry* metrics = nullptr;
  PressureSource* pressure = nullptr;
  FrameSendFn send;
  FrameBatchSendFn send_batch;  // optional
  FaultInjector* faults = nullptr;
};

/// Sender side of a batch: reacts to activations by reading this node's
/// slice of the request and pushing one frame per entry to the DT.
class SenderEngine {
 public:
  SenderEngine(SenderOptions options, SenderDeps deps);
  ~SenderEngine();

  SenderEngine(const SenderEngine&) = delete;
  SenderEngine& operator=(const SenderEngine&) = delete;

  /// Returns immediately; reads and sends run on the worker pool. Malformed
  /// activations are dropped (the DT times out and recovers).
  void on_activation(const ActivationMessage& msg);

  /// Synchronous read for recovery pulls. Ownership is not checked.
  DeliveryFrame serve_pull(const ExecutionId& exec, uint32_t index,
                           const ObjectRef& ref);

  /// Activations with reads or sends still outstanding.
  size_t active_count() const { return active_.load(); }
  uint64_t frames_sent() const { return frames_sent_.load(); }
  uint64_t frames_failed() const { return frames_failed_.load(); }

  void wait_idle() { pool_->wait_idle(); }

 private:
  struct Activation;

  DeliveryFrame read_entry(const ExecutionId& exec, uint32_t index,
                           const ObjectRef& ref);
  void deliver(const NodeInfo& dt, const DeliveryFrame& frame);
  void deliver_all(const NodeInfo& dt, std::vector<DeliveryFrame>& frames);
  void run_slice(const std::shared_ptr<Activation>& act);

  SenderOptions options_;
  SenderDeps deps_;
  std::atomic<size_t> active_{0};
  std::atomic<uint64_t> frames_sent_{0};
  std::atomic<uint64_t> frames_failed_{0};
  std::unique_ptr<ThreadPool> pool_;
};

}  // namespace gbstore

#endif  // GBSTORE_SENDER_SENDER_ENGINE_H_
