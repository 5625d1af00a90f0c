#include "gbstore/util/http_pool.h"

#include <httplib.h>

namespace gbstore {

HttpClientPool::Lease::Lease(HttpClientPool* pool, std::string endpoint,
                             std::unique_ptr<httplib::Client> client)
    : pool_(pool), endpoint_(std::move(endpoint)), client_(std::move(client)) {}

HttpClientPool::Lease::Lease(Lease&& other) noexcept
    : pool_(other.pool_),
      endpoint_(std::move(other.endpoint_)),
      client_(std::move(other.client_)) {}

HttpClientPool::Lease::~Lease() {
  if (client_) pool_->release(endpoint_, std::move(client_));
}

HttpClientPool::HttpClientPool(HttpPoolOptions options) : options_(options) {}

HttpClientPool::~HttpClientPool() = default;

HttpClientPool::Lease HttpClientPool::acquire(const std::string& endpoint) {
  {
    std::lock_guard lock(mu_);
    auto& idle = idle_[endpoint];
    if (!idle.empty()) {
      auto c = std::move(idle.back());
      idle.pop_back();
      return Lease(this, endpoint, std::move(c));
    }
  }
  auto c = std::make_unique<httplib::Client>("http://" + endpoint);
  c->set_keep_alive(true);
  c->set_connection_timeout(options_.connect_timeout);
  c->set_read_timeout(options_.read_timeout);
  c->set_write_timeout(options_.write_timeout);
  return Lease(this, endpoint, std::move(c));
}

void HttpClientPool::release(const std::string& endpoint,
                             std::unique_ptr<httplib::Client> c) {
  std::lock_guard lock(mu_);
  auto& idle = idle_[endpoint];
  if (idle.size() < options_.max_idle_per_host) idle.push_back(std::move(c));
}

}  // namespace gbstore
