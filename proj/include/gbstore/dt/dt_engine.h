#ifndef GBSTORE_DT_DT_ENGINE_H_
#define GBSTORE_DT_DT_ENGINE_H_

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
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

/// Registration refused by admission control (HTTP 429).
class AdmissionRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DtUsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct DtOptions {
  std::chrono::milliseconds rxwait_timeout{10'000};
  int gfn_attempts = 2;
  int max_soft_errors = 8;
  size_t local_workers = 4;
  size_t recovery_workers = 4;
  // An execution whose client never shows up is aborted after this long.
  std::chrono::milliseconds client_wait_timeout{60'000};
  std::chrono::milliseconds tick_period{20};
  bool run_ticker = true;
  AdmissionConfig admission;
};

/// Direct unicast pull of one entry from `node`; nullopt when the node could
/// not be reached.
using PullFn = std::function<std::optional<DeliveryFrame>(
    const NodeInfo& node, const ExecutionId& exec, uint32_t index,
    const ObjectRef& ref)>;

struct DtDeps {
  NodeId self;
  std::function<ClusterMapPtr()> cluster_map;
  TargetStore* store = nullptr;
  MetricsRegistry* metrics = nullptr;
  PressureSource* pressure = nullptr;
  PullFn pull;
  FaultInjector* faults = nullptr;
};

/// Client side of the output stream. write() returns false once the client
/// is gone.
class ClientSink {
 public:
  virtual ~ClientSink() = default;
  virtual bool write(std::string_view bytes) = 0;
  /// Exact archive size, announced once before a buffered emit.
  virtual void expect(uint64_t) {}
  /// Called before emit blocks on an unresolved entry and after the
  /// terminator, so buffering sinks can push out what they hold.
  virtual bool flush() { return true; }
};

enum class EmitStatus { kCompleted, kAborted, kUnknown, kAlreadyClaimed };

struct EmitResult {
  EmitStatus status = EmitStatus::kCompleted;
  std::string reason;
  // Bytes written by emit(). A completed buffered claim carries the exact
  // archive length instead.
  uint64_t bytes = 0;
  bool streaming = false;
};

/// Designated Target engine: owns every execution this node coordinates.
///
/// Lifecycle of one execution: register_request() allocates state, arms
/// per-index deadlines for remotely owned entries and schedules local reads.
/// Results arrive through accept_delivery() (remote senders, pulls) or the
/// local read pool, in any order. emit() writes them to the client strictly
/// in request order, either as they become contiguous (strm) or after all
/// are in (buffered). Missed deadlines trigger pull-based recovery and,
/// once attempts run out, a `timeout` soft error. Any terminal outcome
/// removes the execution from the registry.
class DtEngine {
 public:
  using Clock = std::chrono::steady_clock;

  DtEngine(DtOptions options, DtDeps deps);
  ~DtEngine();

  DtEngine(const DtEngine&) = delete;
  DtEngine& operator=(const DtEngine&) = delete;

  /// Throws AdmissionRejected or, for a reused id, DtUsageError.
  ExecutionId register_request(BatchRequest request,
                               std::optional<ExecutionId> id = std::nullopt,
                               uint64_t size_hint = 0);

  void accept_delivery(DeliveryFrame frame);

  /// Claims the execution for one client and blocks until a response can
  /// start: entry 0 resolved when streaming, every entry otherwise. The
  /// status is kCompleted when ready.
  EmitResult wait_ready(const ExecutionId& id);

  /// Writes the TAR stream. Claims the execution first if wait_ready() was
  /// not called.
  EmitResult emit(const ExecutionId& id, ClientSink& sink);

  /// Aborts every live execution, waking blocked emitters.
  void abort_all(const std::string& reason);

  /// Aborts a live execution; no-op once it has finished.
  void cancel(const ExecutionId& id, const std::string& reason);

  void handle_timeout(const ExecutionId& id, uint32_t index,
                      Clock::time_point now);

  /// Fires expired deadlines and reaps executions nobody claimed.
  void tick(Clock::time_point now);

  size_t registry_size() const;

  /// Reason for a recently aborted execution, if still remembered.
  std::optional<std::string> abort_reason(const ExecutionId& id) const;

  struct ExecutionView {
    size_t batch_size = 0;
    size_t resolved = 0;
    uint32_t next_emit = 0;
    int soft_errors = 0;
    int recovery_attempts = 0;
    size_t armed_deadlines = 0;
    size_t local_entries = 0;
  };
  std::optional<ExecutionView> inspect(const ExecutionId& id) const;

  const DtOptions& options() const { return options_; }

 private:
  struct Execution;
  using ExecutionPtr = std::shared_ptr<Execution>;

  ExecutionPtr find(const ExecutionId& id) const;
  void resolve(const ExecutionPtr& exec, uint32_t index, BatchItemResult result,
               bool remote);
  void resolve_locked(Execution& exec, uint32_t index, BatchItemResult result,
                      bool remote, std::unique_lock<std::mutex>& lock);
  void abort_locked(Execution& exec, std::string reason);
  void finish(const ExecutionId& id);
  void read_local_entry(const ExecutionPtr& exec, uint32_t index);
  void run_pull(const ExecutionPtr& exec, uint32_t index, bool broadcast);
  EmitResult claim(const ExecutionPtr& exec);
  // Caller holds exec.mu and every entry is resolved.
  static uint64_t archive_size_locked(const Execution& exec);
  void ticker_loop();

  DtOptions options_;
  DtDeps deps_;

  mutable std::mutex registry_mu_;
  std::unordered_map<ExecutionId, ExecutionPtr, ExecutionIdHash> registry_;
  std::deque<std::pair<ExecutionId, std::string>> recent_aborts_;

  std::mutex ticker_mu_;
  std::condition_variable ticker_cv_;
  bool stopping_ = false;
  std::thread ticker_;

  // Declared last: destroyed (and drained) before anything they touch.
  std::unique_ptr<ThreadPool> recovery_pool_;
  std::unique_ptr<ThreadPool> local_pool_;
};

}  // namespace gbstore

#endif  // GBSTORE_DT_DT_ENGINE_H_
