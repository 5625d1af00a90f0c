#include "gbstore/node/faults.h"

namespace gbstore {

void FaultInjector::set_delay(const std::string& objname,
                              std::chrono::milliseconds d) {
  std::lock_guard lock(mu_);
  delays_[objname] = d;
}

void FaultInjector::set_drop(const std::string& objname) {
  std::lock_guard lock(mu_);
  drops_.insert(objname);
}

void FaultInjector::set_random_delay(std::chrono::milliseconds lo,
                                     std::chrono::milliseconds hi,
                                     uint64_t seed) {
  std::lock_guard lock(mu_);
  random_lo_ = lo;
  random_hi_ = std::max(lo, hi);
  rng_.seed(seed);
}

void FaultInjector::clear() {
  std::lock_guard lock(mu_);
  delays_.clear();
  drops_.clear();
  random_lo_ = random_hi_ = std::chrono::milliseconds{0};
}

bool FaultInjector::empty() const {
  std::lock_guard lock(mu_);
  return delays_.empty() && drops_.empty() && random_hi_.count() == 0;
}

FaultInjector::Action FaultInjector::on_deliver(const ObjectRef& ref) {
  std::lock_guard lock(mu_);
  Action a;
  if (auto it = delays_.find(ref.objname); it != delays_.end()) {
    a.delay = it->second;
  }
  if (random_hi_.count() > 0) {
    std::uniform_int_distribution<int64_t> dist(random_lo_.count(),
                                                random_hi_.count());
    a.delay += std::chrono::milliseconds(dist(rng_));
  }
  a.drop = drops_.count(ref.objname) > 0;
  return a;
}

}  // namespace gbstore
