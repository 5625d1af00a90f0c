#include "gbstore/metrics/metrics.h"

#include <charconv>
#include <cmath>
#include <sstream>

namespace gbstore {
namespace {

constexpr std::array<std::string_view, kNumCounters> kNames = {
    "work_items_total",
    "delivered_objects_count",
    "delivered_objects_bytes",
    "delivered_shard_members_count",
    "delivered_shard_members_bytes",
    "rxwait_seconds_total",
    "throttle_seconds_total",
    "hard_errors_total",
    "admission_rejects_total",
    "soft_errors_total",
    "recovery_attempts_total",
    "recovery_failures_total",
    "dt_duplicate_frames_total",
    "dt_unknown_frames_total",
};

bool is_seconds(size_t i) {
  return i == static_cast<size_t>(Counter::kRxWait) ||
         i == static_cast<size_t>(Counter::kThrottle);
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string_view counter_name(Counter c) {
  return kNames[static_cast<size_t>(c)];
}

void MetricsRegistry::record(const MetricEvent& event) {
  using namespace metric_event;
  std::visit(
      Overloaded{
          [&](const WorkItems& e) { add(Counter::kWorkItems, e.count); },
          [&](const Delivered& e) {
            if (e.shard_member) {
              add(Counter::kDeliveredShardMembersCount, 1);
              add(Counter::kDeliveredShardMembersBytes, e.bytes);
            } else {
              add(Counter::kDeliveredObjectsCount, 1);
              add(Counter::kDeliveredObjectsBytes, e.bytes);
            }
          },
          [&](const RxWait& e) {
            if (e.waited.count() > 0) {
              add(Counter::kRxWait, static_cast<uint64_t>(e.waited.count()));
            }
          },
          [&](const Throttle& e) {
            if (e.slept.count() > 0) {
              add(Counter::kThrottle, static_cast<uint64_t>(e.slept.count()));
            }
          },
          [&](const HardError&) { add(Counter::kHardErrors, 1); },
          [&](const AdmissionReject&) { add(Counter::kAdmissionRejects, 1); },
          [&](const SoftError&) { add(Counter::kSoftErrors, 1); },
          [&](const RecoveryAttempt&) { add(Counter::kRecoveryAttempts, 1); },
          [&](const RecoveryFailure&) { add(Counter::kRecoveryFailures, 1); },
          [&](const DuplicateFrame&) { add(Counter::kDuplicateFrames, 1); },
          [&](const UnknownFrame&) { add(Counter::kUnknownFrames, 1); },
      },
      event);
}

MetricsSnapshot MetricsRegistry::snapshot() const {
  MetricsSnapshot s;
  for (size_t i = 0; i < kNumCounters; ++i) {
    s.values[i] = counters_[i].load(std::memory_order_relaxed);
  }
  return s;
}

std::string MetricsRegistry::expose() const { return expose_snapshot(snapshot()); }

std::string expose_snapshot(const MetricsSnapshot& snapshot) {
  std::ostringstream out;
  for (size_t i = 0; i < kNumCounters; ++i) {
    out << "# TYPE " << kNames[i] << " counter\n" << kNames[i] << ' ';
    if (is_seconds(i)) {
      // Nanosecond counts render exactly with nine decimals.
      uint64_t ns = snapshot.values[i];
      out << ns / 1'000'000'000ULL;
      if (uint64_t frac = ns % 1'000'000'000ULL; frac != 0) {
        std::string digits = std::to_string(frac);
        digits.insert(0, 9 - digits.size(), '0');
        while (digits.back() == '0') digits.pop_back();
        out << '.' << digits;
      }
    } else {
      out << snapshot.values[i];
    }
    out << '\n';
  }
  return out.str();
}

MetricsSnapshot parse_exposition(std::string_view text) {
  MetricsSnapshot s;
  size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    auto line = text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    if (line.empty() || line.front() == '#') continue;
    auto space = line.find(' ');
    if (space == std::string_view::npos) continue;
    auto name = line.substr(0, space);
    auto value = line.substr(space + 1);
    for (size_t i = 0; i < kNumCounters; ++i) {
      if (kNames[i] != name) continue;
      if (is_seconds(i)) {
        auto dot = value.find('.');
        uint64_t whole = 0, frac = 0;
        std::from_chars(value.data(), value.data() + std::min(dot, value.size()),
                        whole);
        if (dot != std::string_view::npos) {
          std::string digits(value.substr(dot + 1, 9));
          digits.append(9 - digits.size(), '0');
          frac = std::stoull(digits);
        }
        s.values[i] = whole * 1'000'000'000ULL + frac;
      } else {
        std::from_chars(value.data(), value.data() + value.size(), s.values[i]);
      }
    }
  }
  return s;
}

}  // namespace gbstore
