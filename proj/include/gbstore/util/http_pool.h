#ifndef GBSTORE_UTIL_HTTP_POOL_H_
#define GBSTORE_UTIL_HTTP_POOL_H_

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace httplib {
class Client;
}

namespace gbstore {

struct HttpPoolOptions {
  std::chrono::milliseconds connect_timeout{2'000};
  std::chrono::milliseconds read_timeout{60'000};
  std::chrono::milliseconds write_timeout{60'000};
  size_t max_idle_per_host = 32;
};

/// Keep-alive HTTP clients keyed by "host:port". An httplib client runs one
/// request at a time, so concurrent callers each lease their own.
class HttpClientPool {
 public:
  class Lease {
   public:
    Lease(HttpClientPool* pool, std::string endpoint,
          std::unique_ptr<httplib::Client> client);
    Lease(Lease&&) noexcept;
    Lease& operator=(Lease&&) = delete;
    ~Lease();

    httplib::Client* operator->() const { return client_.get(); }
    httplib::Client& operator*() const { return *client_; }

   private:
    HttpClientPool* pool_;
    std::string endpoint_;
    std::unique_ptr<httplib::Client> client_;
  };

  explicit HttpClientPool(HttpPoolOptions options = {});
  ~HttpClientPool();

  Lease acquire(const std::string& endpoint);

 private:
  void release(const std::string& endpoint, std::unique_ptr<httplib::Client> c);

  HttpPoolOptions options_;
  std::mutex mu_;
  std::map<std::string, std::vector<std::unique_ptr<httplib::Client>>> idle_;
};

}  // namespace gbstore

#endif  // GBSTORE_UTIL_HTTP_POOL_H_
