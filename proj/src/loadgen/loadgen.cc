#include "gbstore/loadgen/loadgen.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <json.hpp>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "gbstore/loadgen/client.h"

namespace gbstore::loadgen {
namespace {

using Clock = std::chrono::steady_clock;
constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct WorkerSamples {
  std::vector<double> batch_ms;
  std::vector<double> object_ms;
  std::vector<double> get_sequence_ms;
  uint64_t bytes = 0;
  uint64_t framing = 0;
  uint64_t requests = 0;
  uint64_t errors = 0;
};

}  // namespace

void validate(const BenchConfig& c) {
  if (c.workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (c.duration_s < 1) throw std::invalid_argument("duration must be >= 1 s");
  if (c.object_size == 0) throw std::invalid_argument("object size must be > 0");
  if (c.mode == Mode::kGetBatch && c.batch_size < 1) {
    throw std::invalid_argument("batch size must be >= 1");
  }
  if (c.object_count == 0) throw std::invalid_argument("dataset must not be empty");
  if (c.bucket.empty()) throw std::invalid_argument("bucket must not be empty");
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("percentile of no samples");
  if (!(q > 0 && q <= 1)) throw std::invalid_argument("q must be in (0, 1]");
  // The epsilon keeps exact products such as 0.95 * 100 from rounding up.
  auto rank = static_cast<size_t>(std::ceil(q * samples.size() - 1e-9));
  size_t idx = std::clamp<size_t>(rank, 1, samples.size()) - 1;
  std::nth_element(samples.begin(), samples.begin() + idx, samples.end());
  return samples[idx];
}

LatencyStats summarize(const std::vector<double>& samples) {
  LatencyStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  s.p50 = percentile(samples, 0.50);
  s.p95 = percentile(samples, 0.95);
  s.p99 = percentile(samples, 0.99);
  auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  s.min = *lo;
  s.max = *hi;
  double sum = 0;
  for (double v : samples) sum += v;
  s.avg = std::clamp(sum / samples.size(), s.min, s.max);
  return s;
}

uint64_t parse_size(std::string_view text) {
  size_t i = 0;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
  if (i == 0) throw std::invalid_argument("bad size: " + std::string(text));
  uint64_t n = std::stoull(std::string(text.substr(0, i)));
  std::string unit(text.substr(i));
  std::transform(unit.begin(), unit.end(), unit.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  uint64_t mult;
  if (unit.empty() || unit == "b") {
    mult = 1;
  } else if (unit == "kib" || unit == "k") {
    mult = uint64_t{1} << 10;
  } else if (unit == "mib" || unit == "m") {
    mult = uint64_t{1} << 20;
  } else if (unit == "gib" || unit == "g") {
    mult = uint64_t{1} << 30;
  } else if (unit == "kb") {
    mult = 1000;
  } else if (unit == "mb") {
    mult = 1000 * 1000;
  } else if (unit == "gb") {
    mult = 1000 * 1000 * 1000;
  } else {
    throw std::invalid_argument("bad size unit: " + std::string(text));
  }
  return n * mult;
}

std::string object_name(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "obj-%08zu", index);
  return buf;
}

std::string object_content(uint64_t seed, size_t index, uint64_t size) {
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + index);
  std::string out(size, '\0');
  size_t i = 0;
  for (; i + 8 <= size; i += 8) {
    uint64_t v = rng();
    std::memcpy(out.data() + i, &v, 8);
  }
  if (i < size) {
    uint64_t v = rng();
    std::memcpy(out.data() + i, &v, size - i);
  }
  return out;
}

size_t prepare_dataset(const BenchConfig& config) {
  if (config.object_count == 0) throw std::invalid_argument("dataset must not be empty");
  GatewayClient client(config.gateway);
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mu;
  size_t threads = std::min<size_t>(8, config.object_count);
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < config.object_count && !failed; i = next++) {
        ObjectRef ref{config.bucket, object_name(i), std::nullopt};
        HttpReply r =
            client.put_object(ref, object_content(config.seed, i, config.object_size));
        if (!r.ok()) {
          std::lock_guard lock(failure_mu);
          if (!failed.exchange(true)) {
            failure = "PUT " + ref.objname + " failed: " +
                      (r.status ? std::to_string(r.status) + " " + r.body : r.error);
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed) throw std::runtime_error(failure);
  if (!config.cachedrop.empty() && std::system(config.cachedrop.c_str()) != 0) {
    throw std::runtime_error("cache drop hook failed: " + config.cachedrop);
  }
  return config.object_count;
}

BenchReport run(const BenchConfig& config) {
  validate(config);
  GatewayClient client(config.gateway);
  std::vector<WorkerSamples> samples(config.workers);
  auto start = Clock::now();
  auto deadline = start + std::chrono::duration_cast<Clock::duration>(
                              std::chrono::duration<double>(config.duration_s));

  auto worker = [&](size_t w) {
    WorkerSamples& s = samples[w];
    std::mt19937_64 rng(config.seed * 1000003 + w);
    std::uniform_int_distribution<size_t> pick(0, config.object_count - 1);
    while (Clock::now() < deadline) {
      if (config.mode == Mode::kGet) {
        ObjectRef ref{config.bucket, object_name(pick(rng)), std::nullopt};
        auto t0 = Clock::now();
        HttpReply r = client.get_object(ref);
        double ms = elapsed_ms(t0);
        if (r.ok() && r.body.size() == config.object_size) {
          ++s.requests;
          s.bytes += r.body.size();
          s.batch_ms.push_back(ms);
          s.object_ms.push_back(ms);
        } else {
          ++s.errors;
        }
        continue;
      }
      BatchRequest req;
      req.strm = config.strm;
      for (size_t i = 0; i < config.batch_size; ++i) {
        req.entries.push_back({config.bucket, object_name(pick(rng)), std::nullopt});
      }
      BatchOptions opts;
      opts.keep_items = false;
      if (config.coloc) opts.coloc_query = 1;
      BatchReply r = client.get_batch(req, opts);
      if (!r.complete || r.entry_count != config.batch_size ||
          r.payload_bytes != config.batch_size * config.object_size) {
        ++s.errors;
        continue;
      }
      ++s.requests;
      s.bytes += r.payload_bytes;
      s.framing += r.archive_bytes - r.payload_bytes;
      s.batch_ms.push_back(r.total_ms);
      s.object_ms.push_back(r.total_ms / config.batch_size);

      if (config.compare_gets) {
        auto t0 = Clock::now();
        bool ok = true;
        for (const auto& ref : req.entries) {
          HttpReply g = client.get_object(ref);
          ok = ok && g.ok() && g.body.size() == config.object_size;
        }
        if (ok) {
          s.get_sequence_ms.push_back(elapsed_ms(t0));
        } else {
          ++s.errors;
        }
      }
    }
  };

  std::vector<std::thread> threads;
  for (size_t w = 0; w < config.workers; ++w) threads.emplace_back(worker, w);
  for (auto& t : threads) t.join();
  double wall = std::chrono::duration<double>(Clock::now() - start).count();

  BenchReport report;
  report.mode = config.mode;
  report.object_size = config.object_size;
  report.batch_size = config.mode == Mode::kGet ? 1 : config.batch_size;
  report.workers = config.workers;
  report.duration_s = wall;
  std::vector<double> object_ms;
  for (auto& s : samples) {
    report.total_bytes += s.bytes;
    report.framing_bytes += s.framing;
    report.request_count += s.requests;
    report.error_count += s.errors;
    report.batch_samples_ms.insert(report.batch_samples_ms.end(), s.batch_ms.begin(),
                                   s.batch_ms.end());
    report.get_sequence_samples_ms.insert(report.get_sequence_samples_ms.end(),
                                          s.get_sequence_ms.begin(),
                                          s.get_sequence_ms.end());
    object_ms.insert(object_ms.end(), s.object_ms.begin(), s.object_ms.end());
  }
  report.throughput_gib_s = report.total_bytes / kGiB / wall;
  report.batch_latency = summarize(report.batch_samples_ms);
  report.per_object_latency = summarize(object_ms);
  if (config.compare_gets) {
    report.get_sequence_latency = summarize(report.get_sequence_samples_ms);
  }
  return report;
}

namespace {

nlohmann::json stats_json(const LatencyStats& s) {
  return {{"p50", s.p50}, {"p95", s.p95}, {"p99", s.p99}, {"avg", s.avg},
          {"min", s.min}, {"max", s.max}, {"count", s.count}};
}

}  // namespace

std::string report_json(const BenchReport& r) {
  nlohmann::json j{
      {"mode", r.mode == Mode::kGet ? "get" : "getbatch"},
      {"object_size", r.object_size},
      {"batch_size", r.batch_size},
      {"workers", r.workers},
      {"duration_s", r.duration_s},
      {"total_bytes", r.total_bytes},
      {"framing_bytes", r.framing_bytes},
      {"throughput_gib_s", r.throughput_gib_s},
      {"request_count", r.request_count},
      {"error_count", r.error_count},
      {"batch_latency_ms", stats_json(r.batch_latency)},
      {"per_object_latency_ms", stats_json(r.per_object_latency)},
  };
  if (r.get_sequence_latency) {
    j["get_sequence_latency_ms"] = stats_json(*r.get_sequence_latency);
  }
  return j.dump(2);
}

std::string report_table(const BenchReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line,
                "mode=%s size=%llu batch=%zu workers=%zu duration=%.1fs\n",
                r.mode == Mode::kGet ? "get" : "getbatch",
                static_cast<unsigned long long>(r.object_size), r.batch_size, r.workers,
                r.duration_s);
  out << line;
  std::snprintf(line, sizeof line,
                "throughput %.4f GiB/s  payload %llu B  framing %llu B  requests %llu  "
                "errors %llu\n",
                r.throughput_gib_s, static_cast<unsigned long long>(r.total_bytes),
                static_cast<unsigned long long>(r.framing_bytes),
                static_cast<unsigned long long>(r.request_count),
                static_cast<unsigned long long>(r.error_count));
  out << line;
  auto row = [&](const char* label, const LatencyStats& s) {
    std::snprintf(line, sizeof line, "%-18s %10.2f %10.2f %10.2f %10.2f\n", label, s.p50,
                  s.p95, s.p99, s.avg);
    out << line;
  };
  std::snprintf(line, sizeof line, "%-18s %10s %10s %10s %10s\n", "latency (ms)", "P50",
                "P95", "P99", "Avg");
  out << line;
  row("batch", r.batch_latency);
  row("per-object", r.per_object_latency);
  if (r.get_sequence_latency) row("GETs of sample", *r.get_sequence_latency);
  return out.str();
}

}  // namespace gbstore::loadgen
