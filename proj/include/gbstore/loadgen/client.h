#ifndef GBSTORE_LOADGEN_CLIENT_H_
#define GBSTORE_LOADGEN_CLIENT_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gbstore/core/model.h"
#include "gbstore/metrics/metrics.h"
#include "gbstore/placement/placement.h"
#include "gbstore/tar/tar.h"
#include "gbstore/util/http_pool.h"

namespace gbstore {

struct HttpReply {
  int status = 0;  // 0 when the request never got a response
  std::string body;
  std::string error;

  bool ok() const { return status == 200; }
};

struct BatchItem {
  std::string name;
  std::string payload;
  std::optional<std::string> soft_error;
};

struct BatchOptions {
  std::optional<int64_t> coloc_query;
  // Collect entries into BatchReply::items. Off for benchmarks.
  bool keep_items = true;
};

struct BatchReply {
  int status = 0;
  std::string error;
  std::string dt_endpoint;
  // Archive parsed to its terminator with HTTP 200.
  bool complete = false;
  uint64_t payload_bytes = 0;
  uint64_t archive_bytes = 0;
  size_t entry_count = 0;
  double ttfb_ms = 0;   // request issue to first archive byte
  double total_ms = 0;  // request issue to last archive byte
  std::vector<BatchItem> items;
};

/// HTTP client for the public gateway API. Redirects are followed by hand
/// so each hop reuses a keep-alive connection to its host.
class GatewayClient {
 public:
  explicit GatewayClient(std::string gateway_url, HttpPoolOptions options = {});

  HttpReply put_object(const ObjectRef& ref, std::string_view content);
  HttpReply get_object(const ObjectRef& ref);

  /// One GetBatch round trip: proxy, 307, DT stream. The archive is parsed
  /// incrementally; nothing beyond the current entry is buffered when
  /// keep_items is false.
  BatchReply get_batch(const BatchRequest& request, const BatchOptions& options = {});

  /// Plain GET against any node ("host:port").
  HttpReply get(const std::string& endpoint, const std::string& path);
  HttpReply post(const std::string& endpoint, const std::string& path,
                 const std::string& body);

  ClusterMap cluster_map();
  MetricsSnapshot metrics(const std::string& endpoint);

  const std::string& gateway_endpoint() const { return gateway_; }

 private:
  HttpReply follow(std::string endpoint, std::string path, int max_hops);

  std::string gateway_;
  HttpClientPool pool_;
};

}  // namespace gbstore

#endif  // GBSTORE_LOADGEN_CLIENT_H_
