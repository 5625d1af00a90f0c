#ifndef GBSTORE_NODE_FAULTS_H_
#define GBSTORE_NODE_FAULTS_H_

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>

#include "gbstore/core/model.h"

namespace gbstore {

/// Test-only delivery faults, keyed by object name. Nodes consult this
/// before delivering an entry; it is empty (and free) in normal operation.
class FaultInjector {
 public:
  struct Action {
    std::chrono::milliseconds delay{0};
    bool drop = false;  // sender push is suppressed; pulls still answer
  };

  void set_delay(const std::string& objname, std::chrono::milliseconds d);
  void set_drop(const std::string& objname);
  /// Every delivery sleeps a uniform [lo, hi] ms drawn from a seeded RNG.
  void set_random_delay(std::chrono::milliseconds lo,
                        std::chrono::milliseconds hi, uint64_t seed);
  void clear();

  Action on_deliver(const ObjectRef& ref);
  bool empty() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::chrono::milliseconds> delays_;
  std::set<std::string> drops_;
  std::chrono::milliseconds random_lo_{0};
  std::chrono::milliseconds random_hi_{0};
  std::mt19937_64 rng_{0};
};

}  // namespace gbstore

#endif  // GBSTORE_NODE_FAULTS_H_
