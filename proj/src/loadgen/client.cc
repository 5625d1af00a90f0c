#include "gbstore/loadgen/client.h"

#include <httplib.h>

#include <chrono>
#include <stdexcept>

#include "gbstore/node/node.h"
#include "gbstore/util/net.h"

namespace gbstore {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string object_path(const ObjectRef& ref) {
  std::string path = "/v1/objects/" + url_encode(ref.bucket, false) + "/" +
                     url_encode(ref.objname, true);
  if (ref.archpath) path += "?archpath=" + url_encode(*ref.archpath, false);
  return path;
}

HttpReply to_reply(const httplib::Result& res) {
  HttpReply r;
  if (!res) {
    r.error = httplib::to_string(res.error());
    return r;
  }
  r.status = res->status;
  r.body = res->body;
  return r;
}

}  // namespace

GatewayClient::GatewayClient(std::string gateway_url, HttpPoolOptions options)
    : pool_(options) {
  auto url = parse_http_url(gateway_url);
  if (!url) throw std::invalid_argument("bad gateway url: " + gateway_url);
  gateway_ = url->endpoint.str();
}

HttpReply GatewayClient::put_object(const ObjectRef& ref, std::string_view content) {
  auto cli = pool_.acquire(gateway_);
  return to_reply(cli->Put(object_path(ref), content.data(), content.size(),
                           "application/octet-stream"));
}

HttpReply GatewayClient::get_object(const ObjectRef& ref) {
  return follow(gateway_, object_path(ref), 3);
}

HttpReply GatewayClient::follow(std::string endpoint, std::string path, int max_hops) {
  for (int hop = 0; hop <= max_hops; ++hop) {
    httplib::Result res = [&] {
      auto cli = pool_.acquire(endpoint);
      return cli->Get(path);
    }();
    if (!res || res->status != 307) return to_reply(res);
    auto url = parse_http_url(res->get_header_value("Location"));
    if (!url) {
      HttpReply r;
      r.status = res->status;
      r.error = "bad redirect location";
      return r;
    }
    endpoint = url->endpoint.str();
    path = url->path_and_query;
  }
  HttpReply r;
  r.error = "too many redirects";
  return r;
}

HttpReply GatewayClient::get(const std::string& endpoint, const std::string& path) {
  auto cli = pool_.acquire(endpoint);
  return to_reply(cli->Get(path));
}

HttpReply GatewayClient::post(const std::string& endpoint, const std::string& path,
                              const std::string& body) {
  auto cli = pool_.acquire(endpoint);
  return to_reply(cli->Post(path, body, "application/json"));
}

ClusterMap GatewayClient::cluster_map() {
  HttpReply r = get(gateway_, "/v1/cluster");
  if (!r.ok()) throw std::runtime_error("cluster map fetch failed: " + r.error + r.body);
  return cluster_map_from_json(r.body);
}

MetricsSnapshot GatewayClient::metrics(const std::string& endpoint) {
  HttpReply r = get(endpoint, "/metrics");
  if (!r.ok()) throw std::runtime_error("metrics scrape of " + endpoint + " failed");
  return parse_exposition(r.body);
}

BatchReply GatewayClient::get_batch(const BatchRequest& request,
                                    const BatchOptions& options) {
  BatchReply out;
  auto t0 = Clock::now();

  httplib::Request req;
  req.method = "GET";
  req.path = "/v1/batch";
  if (options.coloc_query) req.path += "?coloc=" + std::to_string(*options.coloc_query);
  req.body = serialize_batch_request(request);
  req.set_header("Content-Type", "application/json");
  httplib::Result first = [&] {
    auto cli = pool_.acquire(gateway_);
    return cli->send(req);
  }();
  if (!first) {
    out.error = httplib::to_string(first.error());
    return out;
  }
  if (first->status != 307) {
    out.status = first->status;
    out.error = first->body;
    out.total_ms = ms_since(t0);
    return out;
  }
  auto url = parse_http_url(first->get_header_value("Location"));
  if (!url) {
    out.status = first->status;
    out.error = "bad redirect location";
    return out;
  }
  out.dt_endpoint = url->endpoint.str();

  BatchItem current;
  tar::TarStreamParser parser({
      [&](const tar::TarEntry& e) {
        if (!options.keep_items) return;
        current = BatchItem{e.name, {}, e.soft_error_reason()};
        current.payload.reserve(e.size);
      },
      [&](std::string_view data) {
        if (options.keep_items) current.payload.append(data);
      },
      [&](const tar::TarEntry&) {
        if (options.keep_items) out.items.push_back(std::move(current));
      },
  });

  int status = 0;
  bool first_byte = false;
  std::string error_body;
  httplib::Request get;
  get.method = "GET";
  get.path = url->path_and_query;
  get.response_handler = [&](const httplib::Response& r) {
    status = r.status;
    return true;
  };
  get.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
    if (status != 200) {
      error_body.append(data, len);
      return true;
    }
    if (!first_byte) {
      first_byte = true;
      out.ttfb_ms = ms_since(t0);
    }
    try {
      parser.feed(std::string_view(data, len));
    } catch (const tar::TarFormatError& e) {
      out.error = std::string("malformed archive: ") + e.what();
      return false;
    }
    return true;
  };
  httplib::Result res = [&] {
    auto cli = pool_.acquire(out.dt_endpoint);
    return cli->send(get);
  }();
  out.total_ms = ms_since(t0);
  out.status = status;
  out.archive_bytes = parser.total_bytes();
  out.payload_bytes = parser.payload_bytes();
  out.entry_count = parser.entry_count();
  if (!res) {
    if (out.error.empty()) out.error = "stream broken: " + httplib::to_string(res.error());
    return out;
  }
  if (status != 200) {
    out.error = error_body;
    return out;
  }
  out.complete = parser.finished();
  if (!out.complete && out.error.empty()) out.error = "truncated archive";
  return out;
}

}  // namespace gbstore
