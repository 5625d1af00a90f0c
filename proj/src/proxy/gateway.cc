#include "gbstore/proxy/gateway.h"

#include <algorithm>
#include <future>
#include <memory>
#include <vector>

#include "gbstore/util/log.h"

namespace gbstore {
namespace {

struct InFlight {
  explicit InFlight(std::atomic<size_t>& c) : c(c) { ++c; }
  ~InFlight() { --c; }
  std::atomic<size_t>& c;
};

GatewayReply error_reply(int status, std::string message) {
  GatewayReply r;
  r.status = status;
  r.error = std::move(message);
  return r;
}

}  // namespace

Gateway::Gateway(GatewayOptions options, std::function<ClusterMapPtr()> cluster_map,
                 DtClient& dt_client, ActivationSendFn send_activation)
    : options_(options),
      cluster_map_(std::move(cluster_map)),
      dt_client_(dt_client),
      send_activation_(std::move(send_activation)),
      broadcast_pool_(std::make_unique<ThreadPool>(std::max<size_t>(1, options_.broadcast_workers))) {}

Gateway::~Gateway() = default;

GatewayReply Gateway::handle_get_batch(std::string_view body,
                                       std::optional<int64_t> coloc_query) {
  InFlight guard(in_flight_);
  if (body.empty()) return error_reply(400, "missing request body");
  if (body.size() > options_.max_body_bytes) {
    return error_reply(413, "request body exceeds " +
                                std::to_string(options_.max_body_bytes) + " bytes");
  }

  ClusterMapPtr map = cluster_map_();
  ExecutionId id = ExecutionId::generate();

  std::optional<BatchRequest> parsed;
  bool colocate = coloc_query && *coloc_query >= 1;
  if (colocate || (!coloc_query && body.find("\"coloc\"") != std::string_view::npos)) {
    ++parses_;
    try {
      parsed = parse_batch_request(body, options_.max_body_bytes);
    } catch (const RequestError& e) {
      return error_reply(400, e.what());
    }
    if (!coloc_query) colocate = parsed->coloc && *parsed->coloc >= 1;
  }

  NodeId dt_id = colocate ? select_dt_colocated(*map, parsed->entries)
                          : select_dt_default(*map, id);
  const NodeInfo* dt = map->find_target(dt_id);

  RegisterOutcome reg = dt_client_.register_execution(*dt, id, body);
  switch (reg.kind) {
    case RegisterOutcome::Kind::kRegistered: break;
    case RegisterOutcome::Kind::kRejected: return error_reply(429, reg.message);
    case RegisterOutcome::Kind::kBadRequest: return error_reply(400, reg.message);
    case RegisterOutcome::Kind::kUnavailable:
      return error_reply(503, "designated target " + dt_id + " unavailable: " +
                                  reg.message);
  }

  DeliveryFrame activation = to_frame(ActivationMessage{id, dt_id, std::string(body)});
  std::vector<std::future<bool>> sends;
  for (const NodeInfo& t : map->targets()) {
    if (t.id == dt_id) continue;
    auto done = std::make_shared<std::promise<bool>>();
    sends.push_back(done->get_future());
    broadcast_pool_->submit([this, &t, &activation, done] {
      try {
        done->set_value(send_activation_(t, activation));
      } catch (...) {
        done->set_exception(std::current_exception());
      }
    });
  }

  GatewayReply r;
  for (auto& f : sends) {
    bool ok = false;
    try {
      ok = f.get();
    } catch (const std::exception& e) {
      GB_LOG(kInfo) << "activation send failed: " << e.what();
    }
    ++(ok ? r.activations_sent : r.activations_failed);
  }
  r.status = 307;
  r.dt = dt_id;
  r.exec_id = id;
  r.location = "http://" + dt->endpoint + "/v1/batch/" + id.hex();
  return r;
}

}  // namespace gbstore
