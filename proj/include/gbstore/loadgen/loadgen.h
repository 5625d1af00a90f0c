#ifndef GBSTORE_LOADGEN_LOADGEN_H_
#define GBSTORE_LOADGEN_LOADGEN_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gbstore/core/model.h"

namespace gbstore::loadgen {

enum class Mode { kGet, kGetBatch };

struct BenchConfig {
  Mode mode = Mode::kGetBatch;
  uint64_t object_size = 10 * 1024;
  size_t batch_size = 32;
  size_t workers = 10;
  double duration_s = 60;
  std::string bucket = "bench";
  uint64_t seed = 1;
  std::string gateway = "http://127.0.0.1:8080";
  bool coloc = false;
  bool strm = false;
  // Objects named obj-00000000 .. obj-<count-1> make up the dataset.
  size_t object_count = 1000;
  // Run after preparation and before the timed run when set.
  std::string cachedrop;
  // getbatch only: after each batch, fetch the same sample with sequential
  // per-object GETs and record that as a comparison sample.
  bool compare_gets = false;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const BenchConfig& config);

struct LatencyStats {
  double p50 = 0, p95 = 0, p99 = 0, avg = 0, min = 0, max = 0;
  size_t count = 0;
};

struct BenchReport {
  Mode mode = Mode::kGetBatch;
  uint64_t object_size = 0;
  size_t batch_size = 1;
  size_t workers = 0;
  double duration_s = 0;  // measured wall time
  uint64_t total_bytes = 0;    // payload bytes
  uint64_t framing_bytes = 0;  // TAR headers, padding, terminators
  double throughput_gib_s = 0;
  uint64_t request_count = 0;
  uint64_t error_count = 0;
  LatencyStats batch_latency;       // ms
  LatencyStats per_object_latency;  // ms
  std::optional<LatencyStats> get_sequence_latency;  // ms, compare_gets only
  std::vector<double> batch_samples_ms;
  std::vector<double> get_sequence_samples_ms;

  double error_rate() const {
    uint64_t all = request_count + error_count;
    return all ? static_cast<double>(error_count) / all : 0;
  }
};

/// Nearest-rank percentile: the ceil(q * n)-th smallest sample. Throws
/// std::invalid_argument on empty input or q outside (0, 1].
double percentile(std::vector<double> samples, double q);

LatencyStats summarize(const std::vector<double>& samples);

/// Accepts plain byte counts and B, KB/KiB, MB/MiB, GB/GiB suffixes.
uint64_t parse_size(std::string_view text);

std::string object_name(size_t index);

/// Deterministic pseudorandom content for object `index` under `seed`.
std::string object_content(uint64_t seed, size_t index, uint64_t size);

/// PUTs every dataset object through the gateway; returns the count.
/// Throws std::runtime_error on the first failed PUT.
size_t prepare_dataset(const BenchConfig& config);

BenchReport run(const BenchConfig& config);

std::string report_json(const BenchReport& report);
std::string report_table(const BenchReport& report);

}  // namespace gbstore::loadgen

#endif  // GBSTORE_LOADGEN_LOADGEN_H_
