#ifndef GBSTORE_METRICS_METRICS_H_
#define GBSTORE_METRICS_METRICS_H_

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

namespace gbstore {

enum class Counter : size_t {
  kWorkItems,
  kDeliveredObjectsCount,
  kDeliveredObjectsBytes,
  kDeliveredShardMembersCount,
  kDeliveredShardMembersBytes,
  kRxWait,    // nanoseconds internally, exported as seconds
  kThrottle,  // nanoseconds internally, exported as seconds
  kHardErrors,
  kAdmissionRejects,
  kSoftErrors,
  kRecoveryAttempts,
  kRecoveryFailures,
  kDuplicateFrames,
  kUnknownFrames,
  kNumCounters,
};

inline constexpr size_t kNumCounters = static_cast<size_t>(Counter::kNumCounters);

/// Exported metric name, e.g. "work_items_total".
std::string_view counter_name(Counter c);

namespace metric_event {
struct WorkItems { uint64_t count; };
struct Delivered { bool shard_member; uint64_t bytes; };
struct RxWait { std::chrono::nanoseconds waited; };
struct Throttle { std::chrono::nanoseconds slept; };
struct HardError {};
struct AdmissionReject {};
struct SoftError {};
struct RecoveryAttempt {};
struct RecoveryFailure {};
struct DuplicateFrame {};
struct UnknownFrame {};
}  // namespace metric_event

using MetricEvent =
    std::variant<metric_event::WorkItems, metric_event::Delivered,
                 metric_event::RxWait, metric_event::Throttle,
                 metric_event::HardError, metric_event::AdmissionReject,
                 metric_event::SoftError, metric_event::RecoveryAttempt,
                 metric_event::RecoveryFailure, metric_event::DuplicateFrame,
                 metric_event::UnknownFrame>;

struct MetricsSnapshot {
  std::array<uint64_t, kNumCounters> values{};

  uint64_t operator[](Counter c) const {
    return values[static_cast<size_t>(c)];
  }
  double seconds(Counter c) const { return (*this)[c] / 1e9; }
};

/// Per-node monotonic counters. Lock-free increments from any thread.
class MetricsRegistry {
 public:
  void record(const MetricEvent& event);

  uint64_t value(Counter c) const {
    return counters_[static_cast<size_t>(c)].load(std::memory_order_relaxed);
  }
  MetricsSnapshot snapshot() const;

  /// Prometheus text exposition: `# TYPE <name> counter` then the value.
  std::string expose() const;

 private:
  void add(Counter c, uint64_t v) {
    counters_[static_cast<size_t>(c)].fetch_add(v, std::memory_order_relaxed);
  }

  std::array<std::atomic<uint64_t>, kNumCounters> counters_{};
};

/// Renders any snapshot the way MetricsRegistry::expose does.
std::string expose_snapshot(const MetricsSnapshot& snapshot);

/// Parses exposition text back into a snapshot (test and tooling helper).
MetricsSnapshot parse_exposition(std::string_view text);

}  // namespace gbstore

#endif  // GBSTORE_METRICS_METRICS_H_
