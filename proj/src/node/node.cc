#include "gbstore/node/node.h"

#include <httplib.h>

#include <charconv>
#include <json.hpp>

#include "gbstore/util/log.h"
#include "gbstore/util/net.h"

namespace gbstore {
namespace {

using json = nlohmann::json;

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

std::optional<int64_t> parse_int(const std::string& s) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string object_path(const ObjectRef& ref) {
  std::string path = "/v1/objects/" + url_encode(ref.bucket, false) + "/" +
                     url_encode(ref.objname, true);
  if (ref.archpath) path += "?archpath=" + url_encode(*ref.archpath, false);
  return path;
}

ObjectRef object_ref_from(const httplib::Request& req) {
  ObjectRef ref{req.matches[1].str(), req.matches[2].str(), std::nullopt};
  if (req.has_param("archpath")) ref.archpath = req.get_param_value("archpath");
  return ref;
}

// Coalesces TAR headers, padding and small payloads into large socket
// writes; payloads bigger than the buffer go straight through.
class SocketSink : public ClientSink {
 public:
  explicit SocketSink(httplib::DataSink& sink) : sink_(sink) { buf_.reserve(kCapacity); }

  bool write(std::string_view b) override {
    if (buf_.size() + b.size() <= kCapacity) {
      buf_.append(b);
      return true;
    }
    if (!flush()) return false;
    if (b.size() >= kCapacity) return sink_.write(b.data(), b.size());
    buf_.append(b);
    return true;
  }

  bool flush() override {
    if (buf_.empty()) return true;
    bool ok = sink_.write(buf_.data(), buf_.size());
    buf_.clear();
    return ok;
  }

 private:
  static constexpr size_t kCapacity = 256 * 1024;
  httplib::DataSink& sink_;
  std::string buf_;
};

ClusterMap initial_map(const NodeOptions& options) {
  if (!options.config.find(options.id)) {
    throw ConfigError(0, "node id '" + options.id + "' is not in the config");
  }
  return options.config.to_map(1);
}

}  // namespace

std::string cluster_map_to_json(const ClusterMap& map) {
  json j;
  j["version"] = map.version();
  j["targets"] = json::array();
  j["proxies"] = json::array();
  for (const auto& t : map.targets()) {
    j["targets"].push_back({{"id", t.id}, {"endpoint", t.endpoint}, {"peer", t.peer_endpoint}});
  }
  for (const auto& p : map.proxies()) {
    j["proxies"].push_back({{"id", p.id}, {"endpoint", p.endpoint}});
  }
  return j.dump();
}

ClusterMap cluster_map_from_json(const std::string& text) {
  json j = json::parse(text);
  std::vector<NodeInfo> targets, proxies;
  for (const auto& t : j.at("targets")) {
    targets.push_back({t.at("id"), t.at("endpoint"), NodeRole::kTarget, t.value("peer", "")});
  }
  for (const auto& p : j.at("proxies")) {
    proxies.push_back({p.at("id"), p.at("endpoint"), NodeRole::kProxy, ""});
  }
  return ClusterMap(j.at("version").get<uint64_t>(), std::move(targets),
                    std::move(proxies));
}

// ---------------------------------------------------------------------------
// Node

Node::Node(NodeOptions options)
    : options_(std::move(options)), map_(initial_map(options_)) {}

Node::~Node() { Node::stop(); }

void Node::start() {
  if (started_) return;
  const NodeConfig* self = options_.config.find(options_.id);
  auto listen = parse_host_port(self->listen);
  if (!listen) throw std::runtime_error("bad listen address " + self->listen);

  server_ = std::make_unique<httplib::Server>();
  size_t threads = options_.http_threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server_->set_keep_alive_max_count(1'000'000);
  server_->set_keep_alive_timeout(30);
  server_->set_read_timeout(std::chrono::seconds(60));
  server_->set_write_timeout(std::chrono::seconds(60));

  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });
  server_->Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(metrics_.expose(), "text/plain; version=0.0.4");
  });
  server_->Get("/v1/cluster", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(cluster_map_to_json(*map_.snapshot()), "application/json");
  });
  server_->Post("/v1/cluster/reload",
                [this](const httplib::Request&, httplib::Response& res) {
                  try {
                    auto map = reload();
                    res.set_content(cluster_map_to_json(*map), "application/json");
                  } catch (const std::exception& e) {
                    reply_error(res, 500, e.what());
                  }
                });
  install_routes(*server_);

  int port = listen->port;
  if (port == 0) {
    port = server_->bind_to_any_port(listen->host);
    if (port < 0) throw std::runtime_error("cannot bind " + listen->host);
  } else if (!server_->bind_to_port(listen->host, port)) {
    throw std::runtime_error("cannot bind " + self->listen);
  }
  http_port_ = static_cast<uint16_t>(port);
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  housekeeping_thread_ = std::thread([this] { housekeeping_loop(); });
  started_ = true;
  GB_LOG(kInfo) << options_.id << " listening on " << listen->host << ":" << port;
}

void Node::stop() {
  if (!started_) return;
  started_ = false;
  {
    std::lock_guard lock(hk_mu_);
    stopping_ = true;
  }
  hk_cv_.notify_all();
  if (housekeeping_thread_.joinable()) housekeeping_thread_.join();
  server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

ClusterMapPtr Node::reload() {
  if (options_.config_path.empty()) return map_.snapshot();
  ClusterConfig fresh = load_config(options_.config_path);
  ClusterMap m = fresh.to_map(1);
  return map_.publish(m.targets(), m.proxies());
}

void Node::housekeeping_loop() {
  std::unique_lock lock(hk_mu_);
  while (!hk_cv_.wait_for(lock, std::chrono::seconds(1), [this] { return stopping_; })) {
    lock.unlock();
    housekeeping();
    lock.lock();
  }
}

// ---------------------------------------------------------------------------
// TargetNode

TargetNode::TargetNode(NodeOptions options) : Node(std::move(options)) {
  self_ = options_.config.find(options_.id);
  if (!options_.config.is_target(options_.id)) {
    throw ConfigError(0, "node '" + options_.id + "' is not a target");
  }
  const Tuning& k = options_.config.tuning;

  AdmissionConfig admission;
  admission.mem_critical = k.mem_critical;
  admission.busy_threshold = k.busy_threshold;
  admission.throttle_step = std::chrono::milliseconds(k.throttle_step_ms);
  admission.mem_budget_bytes = static_cast<uint64_t>(k.mem_budget_bytes);

  PressureSource::Options po;
  po.mem_budget_bytes = admission.mem_budget_bytes;
  po.run_sampler = options_.sample_pressure;
  pressure_ = std::make_unique<PressureSource>(po);

  size_t workers = std::max<int64_t>(1, k.readahead_workers);
  store_ = std::make_unique<TargetStore>(self_->store_root, workers);

  PeerPoolOptions pp;
  pp.max_conns_per_peer = std::max<int64_t>(1, k.max_conns_per_peer);
  pp.idle_timeout = std::chrono::seconds(k.idle_timeout_s);
  pp.connect_timeout = std::chrono::milliseconds(k.connect_timeout_ms);
  peer_pool_ = std::make_unique<PeerPool>(pp);

  HttpPoolOptions hp;
  hp.connect_timeout = std::chrono::milliseconds(k.connect_timeout_ms);
  hp.read_timeout = std::chrono::milliseconds(std::max<int64_t>(k.rxwait_timeout_ms, 1000));
  pull_clients_ = std::make_unique<HttpClientPool>(hp);

  auto map_fn = [this] { return map_.snapshot(); };

  DtOptions dto;
  dto.rxwait_timeout = std::chrono::milliseconds(k.rxwait_timeout_ms);
  dto.gfn_attempts = static_cast<int>(k.gfn_attempts);
  dto.max_soft_errors = static_cast<int>(k.max_soft_errors);
  dto.local_workers = workers;
  dto.client_wait_timeout = std::chrono::seconds(k.client_wait_timeout_s);
  dto.admission = admission;
  DtDeps dtd;
  dtd.self = options_.id;
  dtd.cluster_map = map_fn;
  dtd.store = store_.get();
  dtd.metrics = &metrics_;
  dtd.pressure = pressure_.get();
  dtd.pull = [this](const NodeInfo& n, const ExecutionId& e, uint32_t i,
                    const ObjectRef& r) { return pull(n, e, i, r); };
  dtd.faults = options_.debug_hooks ? &faults_ : nullptr;
  dt_ = std::make_unique<DtEngine>(dto, std::move(dtd));

  SenderOptions so;
  so.admission = admission;
  SenderDeps sd;
  sd.self = options_.id;
  sd.cluster_map = map_fn;
  sd.store = store_.get();
  sd.metrics = &metrics_;
  sd.pressure = pressure_.get();
  sd.send = [this](const NodeInfo& dt, const DeliveryFrame& f, bool fresh) {
    peer_pool_->send_frame(dt.peer_endpoint, f, fresh);
  };
  sd.send_batch = [this](const NodeInfo& dt, std::span<const DeliveryFrame> frames,
                         bool fresh) { peer_pool_->send_frames(dt.peer_endpoint, frames, fresh); };
  sd.faults = options_.debug_hooks ? &faults_ : nullptr;
  sender_ = std::make_unique<SenderEngine>(so, std::move(sd));

  auto peer = parse_host_port(self_->peer);
  if (!peer) throw ConfigError(0, "bad peer address " + self_->peer);
  peer_server_ = std::make_unique<PeerServer>(
      peer->host, peer->port, [this](DeliveryFrame&& f) { on_frame(std::move(f)); });
}

TargetNode::~TargetNode() { TargetNode::stop(); }

void TargetNode::start() {
  peer_server_->start();
  Node::start();
}

void TargetNode::stop() {
  dt_->abort_all("node stopping");
  Node::stop();
  peer_server_->stop();
}

uint16_t TargetNode::peer_port() const { return peer_server_->port(); }

void TargetNode::on_frame(DeliveryFrame&& frame) {
  if (frame.status == FrameStatus::kActivation) {
    sender_->on_activation(activation_from_frame(std::move(frame)));
  } else {
    dt_->accept_delivery(std::move(frame));
  }
}

std::optional<DeliveryFrame> TargetNode::pull(const NodeInfo& node,
                                              const ExecutionId& exec, uint32_t index,
                                              const ObjectRef& ref) {
  std::string path = "/v1/pull?exec=" + exec.hex() + "&idx=" + std::to_string(index) +
                     "&bucket=" + url_encode(ref.bucket, false) +
                     "&objname=" + url_encode(ref.objname, false);
  if (ref.archpath) path += "&archpath=" + url_encode(*ref.archpath, false);
  auto cli = pull_clients_->acquire(node.endpoint);
  auto res = cli->Get(path);
  if (!res || res->status != 200) return std::nullopt;
  try {
    return decode_frame(res->body);
  } catch (const FrameError& e) {
    GB_LOG(kWarning) << "bad pull reply from " << node.id << ": " << e.what();
    return std::nullopt;
  }
}

void TargetNode::housekeeping() {
  peer_pool_->reclaim_idle(PeerPool::Clock::now());
}

void TargetNode::install_routes(httplib::Server& server) {
  const size_t max_body = static_cast<size_t>(options_.config.tuning.max_body_bytes);

  server.Post("/v1/batch", [this, max_body](const httplib::Request& req,
                                            httplib::Response& res) {
    std::optional<ExecutionId> id;
    if (req.has_param("exec")) {
      id = ExecutionId::from_hex(req.get_param_value("exec"));
      if (!id) return reply_error(res, 400, "bad exec id");
    }
    BatchRequest request;
    try {
      request = parse_batch_request(req.body, max_body);
    } catch (const RequestError& e) {
      return reply_error(res, e.kind() == RequestError::Kind::kTooLarge ? 413 : 400,
                         e.what());
    }
    try {
      ExecutionId exec = dt_->register_request(std::move(request), id);
      res.set_content(json{{"exec_id", exec.hex()}}.dump(), "application/json");
    } catch (const AdmissionRejected& e) {
      reply_error(res, 429, e.what());
    } catch (const DtUsageError& e) {
      reply_error(res, 409, e.what());
    }
  });

  server.Get(R"(/v1/batch/([0-9a-f]{32}))", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
    ExecutionId id = *ExecutionId::from_hex(req.matches[1].str());
    EmitResult ready = dt_->wait_ready(id);
    switch (ready.status) {
      case EmitStatus::kUnknown: return reply_error(res, 404, "unknown execution");
      case EmitStatus::kAlreadyClaimed:
        return reply_error(res, 409, "execution already being served");
      case EmitStatus::kAborted: return reply_error(res, 500, ready.reason);
      case EmitStatus::kCompleted: break;
    }
    auto started = std::make_shared<std::atomic<bool>>(false);
    auto release = [this, id, started](bool) {
      if (!started->load()) dt_->cancel(id, "client went away before streaming");
    };
    if (!ready.streaming) {
      // Everything is resolved and held in memory; the length is exact, so
      // the entries are written straight from their result buffers.
      const uint64_t length = ready.bytes;
      res.set_content_provider(
          length, "application/x-tar",
          [this, id, length, started](size_t offset, size_t, httplib::DataSink& sink) {
            if (offset != 0) return false;
            started->store(true);
            SocketSink out(sink);
            EmitResult r = dt_->emit(id, out);
            if (r.status != EmitStatus::kCompleted) {
              GB_LOG(kInfo) << "response " << id.hex() << " cut: " << r.reason;
              return false;
            }
            if (r.bytes != length) {
              GB_LOG(kError) << "archive " << id.hex() << " is " << r.bytes
                             << " bytes, announced " << length;
              return false;
            }
            return true;
          },
          release);
      return;
    }
    res.set_chunked_content_provider(
        "application/x-tar",
        [this, id, started](size_t, httplib::DataSink& sink) {
          started->store(true);
          SocketSink out(sink);
          EmitResult r = dt_->emit(id, out);
          if (r.status != EmitStatus::kCompleted) {
            GB_LOG(kInfo) << "stream " << id.hex() << " cut: " << r.reason;
            return false;
          }
          sink.done();
          return true;
        },
        release);
  });

  server.Get("/v1/pull", [this](const httplib::Request& req, httplib::Response& res) {
    auto exec = ExecutionId::from_hex(req.get_param_value("exec"));
    auto idx = parse_int(req.get_param_value("idx"));
    if (!exec || !idx || *idx < 0 || !req.has_param("bucket") ||
        !req.has_param("objname")) {
      return reply_error(res, 400, "pull needs exec, idx, bucket and objname");
    }
    ObjectRef ref{req.get_param_value("bucket"), req.get_param_value("objname"),
                  std::nullopt};
    if (req.has_param("archpath")) ref.archpath = req.get_param_value("archpath");
    DeliveryFrame f = sender_->serve_pull(*exec, static_cast<uint32_t>(*idx), ref);
    res.set_content(encode_frame(f), "application/octet-stream");
  });

  server.Put(R"(/v1/objects/([^/]+)/(.+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               ObjectRef ref = object_ref_from(req);
               if (ref.archpath) return reply_error(res, 400, "cannot PUT a member");
               try {
                 uint64_t n = store_->put_object(ref, req.body);
                 res.set_content(json{{"size", n}}.dump(), "application/json");
               } catch (const InvalidObjectName& e) {
                 reply_error(res, 400, e.what());
               } catch (const std::exception& e) {
                 reply_error(res, 500, e.what());
               }
             });

  server.Get(R"(/v1/objects/([^/]+)/(.+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               ObjectRef ref = object_ref_from(req);
               try {
                 ReadResult r = store_->read_local(ref);
                 if (!r.ok()) return reply_error(res, 404, *r.soft_error);
                 res.set_content(std::move(r.bytes), "application/octet-stream");
               } catch (const std::exception& e) {
                 reply_error(res, 500, e.what());
               }
             });

  if (!options_.debug_hooks) return;

  server.Post("/v1/debug/faults", [this](const httplib::Request& req,
                                         httplib::Response& res) {
    try {
      json j = json::parse(req.body);
      if (j.value("clear", false)) faults_.clear();
      if (j.contains("delay")) {
        for (auto& [name, ms] : j["delay"].items()) {
          faults_.set_delay(name, std::chrono::milliseconds(ms.get<int64_t>()));
        }
      }
      if (j.contains("drop")) {
        for (const auto& name : j["drop"]) faults_.set_drop(name.get<std::string>());
      }
      if (j.contains("random_delay")) {
        const auto& r = j["random_delay"];
        faults_.set_random_delay(std::chrono::milliseconds(r.at("lo_ms").get<int64_t>()),
                                 std::chrono::milliseconds(r.at("hi_ms").get<int64_t>()),
                                 r.value("seed", uint64_t{0}));
      }
      res.set_content("{}", "application/json");
    } catch (const std::exception& e) {
      reply_error(res, 400, e.what());
    }
  });

  server.Post("/v1/debug/pressure", [this](const httplib::Request& req,
                                           httplib::Response& res) {
    try {
      json j = json::parse(req.body);
      if (j.value("clear", false)) {
        pressure_->inject(std::nullopt);
      } else {
        PressureState s;
        s.mem_used_fraction = j.value("mem", 0.0);
        s.cpu_busy_fraction = j.value("cpu", 0.0);
        s.disk_busy_fraction = j.value("disk", 0.0);
        pressure_->inject(s);
      }
      res.set_content("{}", "application/json");
    } catch (const std::exception& e) {
      reply_error(res, 400, e.what());
    }
  });

  server.Get("/v1/debug/stats", [this](const httplib::Request&, httplib::Response& res) {
    json j{{"dt_registry", dt_->registry_size()},
           {"sender_active", sender_->active_count()},
           {"frames_received", peer_server_->frames_received()},
           {"frames_sent", sender_->frames_sent()},
           {"frames_failed", sender_->frames_failed()},
           {"peer_connections", peer_pool_->total_connections()},
           {"peer_dials", peer_pool_->dial_count()}};
    res.set_content(j.dump(), "application/json");
  });
}

// ---------------------------------------------------------------------------
// ProxyNode

class ProxyNode::HttpDtClient : public DtClient {
 public:
  explicit HttpDtClient(HttpClientPool& clients) : clients_(clients) {}

  RegisterOutcome register_execution(const NodeInfo& dt, const ExecutionId& id,
                                     std::string_view body) override {
    auto cli = clients_.acquire(dt.endpoint);
    auto res = cli->Post("/v1/batch?exec=" + id.hex(), body.data(), body.size(),
                         "application/json");
    using Kind = RegisterOutcome::Kind;
    if (!res) return {Kind::kUnavailable, httplib::to_string(res.error())};
    switch (res->status) {
      case 200: return {Kind::kRegistered, {}};
      case 429: return {Kind::kRejected, res->body};
      case 400:
      case 413: return {Kind::kBadRequest, res->body};
      default: return {Kind::kUnavailable, "status " + std::to_string(res->status)};
    }
  }

 private:
  HttpClientPool& clients_;
};

ProxyNode::ProxyNode(NodeOptions options) : Node(std::move(options)) {
  if (options_.config.is_target(options_.id)) {
    throw ConfigError(0, "node '" + options_.id + "' is not a proxy");
  }
  const Tuning& k = options_.config.tuning;
  PeerPoolOptions pp;
  pp.max_conns_per_peer = std::max<int64_t>(1, k.max_conns_per_peer);
  pp.idle_timeout = std::chrono::seconds(k.idle_timeout_s);
  pp.connect_timeout = std::chrono::milliseconds(k.activation_timeout_ms);
  pp.send_timeout = std::chrono::milliseconds(k.activation_timeout_ms);
  peer_pool_ = std::make_unique<PeerPool>(pp);

  HttpPoolOptions hp;
  hp.connect_timeout = std::chrono::milliseconds(k.connect_timeout_ms);
  clients_ = std::make_unique<HttpClientPool>(hp);
  dt_client_ = std::make_unique<HttpDtClient>(*clients_);

  GatewayOptions go;
  go.max_body_bytes = static_cast<size_t>(k.max_body_bytes);
  gateway_ = std::make_unique<Gateway>(
      go, [this] { return map_.snapshot(); }, *dt_client_,
      [this](const NodeInfo& t, const DeliveryFrame& f) {
        try {
          peer_pool_->send_frame(t.peer_endpoint, f);
          return true;
        } catch (const std::exception& e) {
          GB_LOG(kInfo) << "activation to " << t.id << " failed: " << e.what();
          return false;
        }
      });
}

ProxyNode::~ProxyNode() { Node::stop(); }

void ProxyNode::housekeeping() { peer_pool_->reclaim_idle(PeerPool::Clock::now()); }

void ProxyNode::install_routes(httplib::Server& server) {
  server.Get("/v1/batch", [this](const httplib::Request& req, httplib::Response& res) {
    std::optional<int64_t> coloc;
    if (req.has_param("coloc")) {
      coloc = parse_int(req.get_param_value("coloc"));
      if (!coloc || *coloc < 0) return reply_error(res, 400, "bad coloc value");
    }
    GatewayReply r = gateway_->handle_get_batch(req.body, coloc);
    if (r.status != 307) return reply_error(res, r.status, r.error);
    res.status = 307;
    res.set_header("Location", r.location);
  });

  server.Put(R"(/v1/objects/([^/]+)/(.+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               ObjectRef ref = object_ref_from(req);
               auto map = map_.snapshot();
               const NodeInfo* owner = map->find_target(owner_of(*map, ref));
               auto cli = clients_->acquire(owner->endpoint);
               auto up = cli->Put(object_path(ref), req.body, "application/octet-stream");
               if (!up) {
                 return reply_error(res, 503, "owner " + owner->id + " unavailable");
               }
               res.status = up->status;
               res.set_content(up->body, up->get_header_value("Content-Type"));
             });

  server.Get(R"(/v1/objects/([^/]+)/(.+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               ObjectRef ref = object_ref_from(req);
               auto map = map_.snapshot();
               const NodeInfo* owner = map->find_target(owner_of(*map, ref));
               res.status = 307;
               res.set_header("Location", "http://" + owner->endpoint + object_path(ref));
             });

  if (!options_.debug_hooks) return;
  server.Get("/v1/debug/stats", [this](const httplib::Request&, httplib::Response& res) {
    json j{{"body_parses", gateway_->body_parse_count()},
           {"in_flight", gateway_->in_flight()},
           {"peer_connections", peer_pool_->total_connections()}};
    res.set_content(j.dump(), "application/json");
  });
}

std::unique_ptr<Node> make_node(NodeOptions options) {
  if (options.config.is_target(options.id)) {
    return std::make_unique<TargetNode>(std::move(options));
  }
  return std::make_unique<ProxyNode>(std::move(options));
}

}  // namespace gbstore
