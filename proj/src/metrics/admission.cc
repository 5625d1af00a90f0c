#include "gbstore/metrics/admission.h"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace gbstore {
namespace {

constexpr double kOvershootUnit = 0.05;
constexpr double kSmoothing = 0.3;

double clamp01(double v) {
  if (!(v >= 0)) return 0;  // also catches NaN
  return std::min(v, 1.0);
}

uint64_t physical_memory_bytes() {
  long pages = ::sysconf(_SC_PHYS_PAGES);
  long page = ::sysconf(_SC_PAGESIZE);
  return pages > 0 && page > 0 ? static_cast<uint64_t>(pages) * page : 0;
}

uint64_t process_rss_bytes() {
  std::ifstream in("/proc/self/statm");
  uint64_t size = 0, resident = 0;
  if (!(in >> size >> resident)) return 0;
  return resident * static_cast<uint64_t>(::sysconf(_SC_PAGESIZE));
}

double process_cpu_seconds() {
  std::ifstream in("/proc/self/stat");
  std::string line;
  if (!std::getline(in, line)) return 0;
  // Fields after the parenthesised command name; utime and stime are the
  // 14th and 15th fields overall.
  auto close = line.rfind(')');
  if (close == std::string::npos) return 0;
  std::istringstream rest(line.substr(close + 2));
  std::string field;
  uint64_t utime = 0, stime = 0;
  for (int i = 3; i <= 15 && rest >> field; ++i) {
    if (i == 14) utime = std::stoull(field);
    if (i == 15) stime = std::stoull(field);
  }
  return static_cast<double>(utime + stime) / ::sysconf(_SC_CLK_TCK);
}

// Largest io_ticks (ms spent doing IO) across block devices.
uint64_t max_io_ticks_ms() {
  std::ifstream in("/proc/diskstats");
  std::string line;
  uint64_t best = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string f;
    uint64_t ticks = 0;
    for (int i = 1; i <= 13 && fields >> f; ++i) {
      if (i == 13) ticks = std::stoull(f);
    }
    best = std::max(best, ticks);
  }
  return best;
}

}  // namespace

PressureState PressureState::clamped() const {
  PressureState s = *this;
  s.mem_used_fraction = clamp01(mem_used_fraction);
  s.cpu_busy_fraction = clamp01(cpu_busy_fraction);
  s.disk_busy_fraction = clamp01(disk_busy_fraction);
  return s;
}

AdmissionDecision admit(const AdmissionConfig& config,
                        const PressureState& pressure,
                        uint64_t request_size_hint) {
  PressureState p = pressure.clamped();
  double mem = p.mem_used_fraction;
  if (config.mem_budget_bytes > 0) {
    mem += static_cast<double>(request_size_hint) / config.mem_budget_bytes;
  }
  if (mem >= config.mem_critical) {
    return {AdmissionDecision::Kind::kReject429, {}};
  }
  double busy = std::max(p.cpu_busy_fraction, p.disk_busy_fraction);
  if (busy >= config.busy_threshold) {
    double over = (busy - config.busy_threshold) / kOvershootUnit;
    auto steps = 1 + static_cast<int64_t>(std::floor(over + 1e-9));
    return {AdmissionDecision::Kind::kAdmitWithThrottle,
            std::chrono::duration_cast<std::chrono::nanoseconds>(
                config.throttle_step * steps)};
  }
  return {AdmissionDecision::Kind::kAdmit, {}};
}

PressureSource::PressureSource() : PressureSource(Options{}) {}

PressureSource::PressureSource(Options options) : options_(options) {
  if (options_.mem_budget_bytes == 0) {
    options_.mem_budget_bytes = physical_memory_bytes();
  }
  if (options_.run_sampler) {
    take_measurement();
    sampler_ = std::thread([this] { sampler_loop(); });
  }
}

PressureSource::~PressureSource() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (sampler_.joinable()) sampler_.join();
}

PressureState PressureSource::sample() const {
  std::lock_guard lock(mu_);
  if (injected_) return *injected_;
  return measured_;
}

void PressureSource::inject(std::optional<PressureState> state) {
  std::lock_guard lock(mu_);
  if (state) {
    injected_ = state->clamped();
    injected_->source = PressureSourceKind::kInjected;
  } else {
    injected_.reset();
  }
}

bool PressureSource::injected() const {
  std::lock_guard lock(mu_);
  return injected_.has_value();
}

void PressureSource::sampler_loop() {
  std::unique_lock lock(mu_);
  while (!cv_.wait_for(lock, options_.sample_period,
                       [this] { return stopping_; })) {
    lock.unlock();
    take_measurement();
    lock.lock();
  }
}

void PressureSource::take_measurement() {
  auto now = std::chrono::steady_clock::now();
  double cpu_seconds = process_cpu_seconds();
  uint64_t io_ticks = max_io_ticks_ms();
  double mem = options_.mem_budget_bytes > 0
                   ? static_cast<double>(process_rss_bytes()) /
                         options_.mem_budget_bytes
                   : 0;

  std::lock_guard lock(mu_);
  PressureState next = measured_;
  next.mem_used_fraction = mem;
  if (last_cpu_seconds_ >= 0) {
    double wall = std::chrono::duration<double>(now - last_sample_).count();
    if (wall > 0) {
      long cpus = std::max(1L, ::sysconf(_SC_NPROCESSORS_ONLN));
      double cpu = (cpu_seconds - last_cpu_seconds_) / (wall * cpus);
      double disk = (io_ticks - last_io_ticks_ms_) / (wall * 1000.0);
      next.cpu_busy_fraction =
          kSmoothing * clamp01(cpu) + (1 - kSmoothing) * measured_.cpu_busy_fraction;
      next.disk_busy_fraction =
          kSmoothing * clamp01(disk) + (1 - kSmoothing) * measured_.disk_busy_fraction;
    }
  }
  next.source = PressureSourceKind::kMeasured;
  measured_ = next.clamped();
  last_cpu_seconds_ = cpu_seconds;
  last_io_ticks_ms_ = io_ticks;
  last_sample_ = now;
}

std::chrono::nanoseconds throttle_work_item(const AdmissionConfig& config,
                                            const PressureSource& pressure,
                                            MetricsRegistry& metrics) {
  auto decision = admit(config, pressure.sample());
  if (decision.kind != AdmissionDecision::Kind::kAdmitWithThrottle) {
    return std::chrono::nanoseconds{0};
  }
  auto start = std::chrono::steady_clock::now();
  std::this_thread::sleep_for(decision.throttle);
  auto slept = std::chrono::steady_clock::now() - start;
  metrics.record(metric_event::Throttle{slept});
  return std::chrono::duration_cast<std::chrono::nanoseconds>(slept);
}

}  // namespace gbstore
