#ifndef GBSTORE_METRICS_ADMISSION_H_
#define GBSTORE_METRICS_ADMISSION_H_

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <thread>

#include "gbstore/metrics/metrics.h"

namespace gbstore {

enum class PressureSourceKind { kMeasured, kInjected };

struct PressureState {
  double mem_used_fraction = 0;
  double cpu_busy_fraction = 0;
  double disk_busy_fraction = 0;
  PressureSourceKind source = PressureSourceKind::kMeasured;

  /// Copy with every fraction clamped to [0, 1].
  PressureState clamped() const;
};

struct AdmissionConfig {
  double mem_critical = 0.90;
  double busy_threshold = 0.85;
  std::chrono::milliseconds throttle_step{10};
  // Used to turn a request size hint into a memory fraction; 0 ignores
  // the hint.
  uint64_t mem_budget_bytes = 0;
};

struct AdmissionDecision {
  enum class Kind { kAdmit, kReject429, kAdmitWithThrottle };
  Kind kind = Kind::kAdmit;
  std::chrono::nanoseconds throttle{0};
};

/// Memory at or above mem_critical rejects. CPU or disk at or above
/// busy_threshold admits with a sleep of one throttle_step at the threshold
/// plus one more step per 5 points of overshoot.
AdmissionDecision admit(const AdmissionConfig& config,
                        const PressureState& pressure,
                        uint64_t request_size_hint = 0);

/// Source of PressureState. Measured values come from a sampler thread
/// (process RSS against the memory budget, EWMA-smoothed process CPU share
/// and device busy time). inject() overrides measurement until cleared.
class PressureSource {
 public:
  struct Options {
    uint64_t mem_budget_bytes = 0;  // 0 = physical memory
    std::chrono::milliseconds sample_period{500};
    bool run_sampler = true;
  };

  PressureSource();
  explicit PressureSource(Options options);
  ~PressureSource();

  PressureSource(const PressureSource&) = delete;
  PressureSource& operator=(const PressureSource&) = delete;

  PressureState sample() const;
  void inject(std::optional<PressureState> state);
  bool injected() const;

 private:
  void sampler_loop();
  void take_measurement();

  Options options_;
  mutable std::mutex mu_;
  std::optional<PressureState> injected_;
  PressureState measured_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread sampler_;

  // Sampler state.
  double last_cpu_seconds_ = -1;
  uint64_t last_io_ticks_ms_ = 0;
  std::chrono::steady_clock::time_point last_sample_;
};

/// One work item's worth of backpressure: consults the current pressure,
/// sleeps for the throttle interval if any, and records it.
std::chrono::nanoseconds throttle_work_item(const AdmissionConfig& config,
                                            const PressureSource& pressure,
                                            MetricsRegistry& metrics);

}  // namespace gbstore

#endif  // GBSTORE_METRICS_ADMISSION_H_
