#include "support.h"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <stdexcept>

#include "gbstore/harness/harness.h"

namespace gbstore::testing {
namespace {

constexpr size_t kBlock = 512;

bool all_zero(std::string_view b) {
  return std::all_of(b.begin(), b.end(), [](char c) { return c == 0; });
}

std::string field_string(std::string_view block, size_t off, size_t len) {
  std::string_view f = block.substr(off, len);
  size_t end = f.find('\0');
  return std::string(f.substr(0, end));
}

std::optional<uint64_t> field_number(std::string_view block, size_t off, size_t len) {
  std::string_view f = block.substr(off, len);
  if (static_cast<unsigned char>(f[0]) & 0x80) {
    uint64_t v = static_cast<unsigned char>(f[0]) & 0x7f;
    for (size_t i = 1; i < f.size(); ++i) v = (v << 8) | static_cast<unsigned char>(f[i]);
    return v;
  }
  uint64_t v = 0;
  bool digits = false;
  for (char c : f) {
    if (c == '\0' || c == ' ') {
      if (digits) break;
      continue;
    }
    if (c < '0' || c > '7') return std::nullopt;
    v = v * 8 + (c - '0');
    digits = true;
  }
  return v;
}

bool checksum_ok(std::string_view block) {
  auto stored = field_number(block, 148, 8);
  if (!stored) return false;
  uint64_t sum = 0;
  for (size_t i = 0; i < kBlock; ++i) {
    sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(block[i]);
  }
  return sum == *stored;
}

std::optional<std::map<std::string, std::string>> parse_pax(std::string_view data) {
  std::map<std::string, std::string> out;
  size_t pos = 0;
  while (pos < data.size()) {
    size_t sp = data.find(' ', pos);
    if (sp == std::string_view::npos) return std::nullopt;
    size_t len = 0;
    for (size_t i = pos; i < sp; ++i) {
      if (data[i] < '0' || data[i] > '9') return std::nullopt;
      len = len * 10 + (data[i] - '0');
    }
    if (len == 0 || pos + len > data.size() || data[pos + len - 1] != '\n') {
      return std::nullopt;
    }
    std::string_view rec = data.substr(sp + 1, pos + len - 1 - (sp + 1));
    size_t eq = rec.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    out[std::string(rec.substr(0, eq))] = std::string(rec.substr(eq + 1));
    pos += len;
  }
  return out;
}

RefArchive read_impl(std::string_view bytes, bool pax_aware) {
  RefArchive a;
  auto fail = [&](std::string why) {
    a.ok = false;
    a.error = std::move(why);
    return a;
  };
  if (bytes.size() % kBlock != 0) return fail("length not a multiple of 512");
  std::map<std::string, std::string> pending;
  bool have_pending = false;
  size_t pos = 0;
  for (;;) {
    if (pos + kBlock > bytes.size()) return fail("missing terminator");
    std::string_view h = bytes.substr(pos, kBlock);
    if (all_zero(h)) {
      if (pos + 2 * kBlock > bytes.size()) return fail("single zero block at end");
      if (!all_zero(bytes.substr(pos + kBlock, kBlock))) {
        return fail("zero block not followed by a second one");
      }
      if (pos + 2 * kBlock != bytes.size()) return fail("data after terminator");
      if (have_pending) return fail("pax header without a following entry");
      a.ok = true;
      return a;
    }
    if (!checksum_ok(h)) return fail("bad checksum at offset " + std::to_string(pos));
    if (h.substr(257, 6) != std::string_view("ustar\0", 6)) {
      return fail("missing ustar magic at offset " + std::to_string(pos));
    }
    auto size = field_number(h, 124, 12);
    if (!size) return fail("bad size field");
    RefEntry e;
    e.typeflag = h[156] == '\0' ? '0' : h[156];
    std::string prefix = field_string(h, 345, 155);
    e.name = field_string(h, 0, 100);
    if (!prefix.empty()) e.name = prefix + "/" + e.name;
    pos += kBlock;
    uint64_t padded = (*size + kBlock - 1) / kBlock * kBlock;
    if (pos + padded > bytes.size()) return fail("payload runs past the end");
    std::string_view data = bytes.substr(pos, *size);
    if (!all_zero(bytes.substr(pos + *size, padded - *size))) {
      return fail("nonzero padding after " + e.name);
    }
    pos += padded;

    if (pax_aware && e.typeflag == 'x') {
      auto recs = parse_pax(data);
      if (!recs) return fail("malformed pax records");
      pending = std::move(*recs);
      have_pending = true;
      continue;
    }
    if (pax_aware && e.typeflag == 'g') continue;
    e.payload = std::string(data);
    if (have_pending) {
      if (auto it = pending.find("path"); it != pending.end()) e.name = it->second;
      if (auto it = pending.find("size"); it != pending.end() &&
                                          std::to_string(*size) != it->second) {
        return fail("pax size disagrees with header");
      }
      e.pax = std::move(pending);
      pending.clear();
      have_pending = false;
    }
    a.entries.push_back(std::move(e));
  }
}

void put_oct(char* f, size_t width, uint64_t v) {
  std::string digits;
  do {
    digits.insert(digits.begin(), static_cast<char>('0' + (v % 8)));
    v /= 8;
  } while (v);
  std::string s(width - 1 - digits.size(), '0');
  s += digits;
  std::memcpy(f, s.data(), width - 1);
  f[width - 1] = 0;
}

}  // namespace

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  auto base = std::filesystem::temp_directory_path();
  path_ = base / ("gbstore-test-" + std::to_string(::getpid()) + "-" +
                  std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

RefArchive ref_read_tar(std::string_view bytes) { return read_impl(bytes, true); }
RefArchive ustar_only_read(std::string_view bytes) { return read_impl(bytes, false); }

std::string ref_write_tar(const std::vector<std::pair<std::string, std::string>>& files) {
  std::string out;
  for (const auto& [name, data] : files) {
    if (name.size() > 100) throw std::invalid_argument("name too long for ustar");
    char h[kBlock] = {};
    std::memcpy(h, name.data(), name.size());
    put_oct(h + 100, 8, 0644);
    put_oct(h + 108, 8, 0);
    put_oct(h + 116, 8, 0);
    put_oct(h + 124, 12, data.size());
    put_oct(h + 136, 12, 0);
    h[156] = '0';
    std::memcpy(h + 257, "ustar", 6);
    std::memcpy(h + 263, "00", 2);
    std::memset(h + 148, ' ', 8);
    uint64_t sum = 0;
    for (unsigned char c : h) sum += c;
    put_oct(h + 148, 7, sum);
    h[155] = ' ';
    out.append(h, kBlock);
    out += data;
    out.append((kBlock - data.size() % kBlock) % kBlock, '\0');
  }
  out.append(2 * kBlock, '\0');
  return out;
}

std::string random_bytes(std::mt19937_64& rng, size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng() & 0xff);
  return s;
}

std::string random_name(std::mt19937_64& rng, size_t min_len, size_t max_len) {
  static constexpr std::string_view kAlphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_.";
  std::uniform_int_distribution<size_t> len(min_len, max_len);
  std::uniform_int_distribution<size_t> pick(0, kAlphabet.size() - 1);
  std::string s(len(rng), 'x');
  for (auto& c : s) c = kAlphabet[pick(rng)];
  if (s.front() == '.') s.front() = 'n';
  return s;
}

double sorted_percentile(std::vector<double> samples, int q_per_mille) {
  std::sort(samples.begin(), samples.end());
  size_t n = samples.size();
  size_t rank = (static_cast<size_t>(q_per_mille) * n + 999) / 1000;
  if (rank == 0) rank = 1;
  return samples[rank - 1];
}

InProcCluster::InProcCluster(size_t proxies, size_t targets, Tuning tuning) {
  config_ = make_local_config(proxies, targets, dir_ / "stores", tuning);
  auto launch = [&](const NodeConfig& n) {
    NodeOptions o;
    o.config = config_;
    o.id = n.id;
    o.debug_hooks = true;
    o.sample_pressure = false;
    o.http_threads = 16;
    auto node = make_node(std::move(o));
    node->start();
    nodes_[n.id] = std::move(node);
  };
  for (const auto& t : config_.targets) launch(t);
  for (const auto& p : config_.proxies) launch(p);
}

InProcCluster::~InProcCluster() {
  for (auto& [id, node] : nodes_) node->stop();
  nodes_.clear();
}

std::string InProcCluster::gateway_url() const {
  return "http://" + config_.proxies.front().listen;
}

TargetNode& InProcCluster::target(size_t i) { return target(config_.targets.at(i).id); }

TargetNode& InProcCluster::target(const NodeId& id) {
  return dynamic_cast<TargetNode&>(*nodes_.at(id));
}

ProxyNode& InProcCluster::proxy(size_t i) {
  return dynamic_cast<ProxyNode&>(*nodes_.at(config_.proxies.at(i).id));
}

ClusterMapPtr InProcCluster::map() const { return nodes_.begin()->second->cluster_map(); }

uint64_t InProcCluster::total(Counter c) { return totals()[c]; }

MetricsSnapshot InProcCluster::totals() {
  MetricsSnapshot s;
  for (auto& [id, node] : nodes_) {
    auto one = node->metrics().snapshot();
    for (size_t i = 0; i < kNumCounters; ++i) s.values[i] += one.values[i];
  }
  return s;
}

void InProcCluster::stop_target(const NodeId& id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return;
  it->second->stop();
  nodes_.erase(it);
}

void InProcCluster::restart_target(const NodeId& id) {
  stop_target(id);
  NodeOptions o;
  o.config = config_;
  o.id = id;
  o.debug_hooks = true;
  o.sample_pressure = false;
  o.http_threads = 16;
  auto node = make_node(std::move(o));
  node->start();
  nodes_[id] = std::move(node);
}

std::optional<std::string> get_via_gateway(GatewayClient& client, const ObjectRef& ref) {
  HttpReply r = client.get_object(ref);
  if (!r.ok()) return std::nullopt;
  return r.body;
}

std::filesystem::path node_binary() { return GBSTORE_NODE_BINARY; }

std::filesystem::path tool_binary(const std::string& name) {
  return node_binary().parent_path() / name;
}

}  // namespace gbstore::testing
