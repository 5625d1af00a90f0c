#ifndef GBSTORE_UTIL_NET_H_
#define GBSTORE_UTIL_NET_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace gbstore {

struct HostPort {
  std::string host;
  uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
  friend bool operator==(const HostPort&, const HostPort&) = default;
};

/// Parses "host:port". Returns nullopt on a missing or out-of-range port.
std::optional<HostPort> parse_host_port(std::string_view s);

struct HttpUrl {
  HostPort endpoint;
  std::string path_and_query;  // always starts with '/'
};

/// Parses "http://host:port/path?query". Only plain http is supported.
std::optional<HttpUrl> parse_http_url(std::string_view url);

/// Percent-encodes everything except RFC 3986 unreserved characters and,
/// when `keep_slash`, the '/' separator.
std::string url_encode(std::string_view s, bool keep_slash);

/// Asks the kernel for an unused loopback TCP port. The port is released
/// before returning, so a racing process may still take it.
uint16_t pick_free_port();

}  // namespace gbstore

#endif  // GBSTORE_UTIL_NET_H_
