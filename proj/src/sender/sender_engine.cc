#include "gbstore/sender/sender_engine.h"

#include <algorithm>
#include <thread>

#include "gbstore/transport/peer.h"
#include "gbstore/util/log.h"

namespace gbstore {

struct SenderEngine::Activation {
  ExecutionId exec;
  NodeInfo dt;
  std::vector<IndexedRef> slice;
  std::atomic<size_t> next{0};
  std::atomic<size_t> running{0};
};

SenderEngine::SenderEngine(SenderOptions options, SenderDeps deps)
    : options_(options),
      deps_(std::move(deps)),
      pool_(std::make_unique<ThreadPool>(std::max<size_t>(1, options.workers))) {}

SenderEngine::~SenderEngine() { pool_.reset(); }

void SenderEngine::on_activation(const ActivationMessage& msg) {
  if (msg.dt_node == deps_.self) return;
  BatchRequest request;
  try {
    request = parse_batch_request(msg.request_body);
  } catch (const RequestError& e) {
    GB_LOG(kWarning) << "dropping activation " << msg.exec_id.hex() << ": "
                     << e.what();
    return;
  }
  ClusterMapPtr map = deps_.cluster_map();
  const NodeInfo* dt = map->find_target(msg.dt_node);
  if (!dt) {
    GB_LOG(kWarning) << "activation names unknown DT " << msg.dt_node;
    return;
  }
  auto parts = partition_entries(*map, request.entries);
  auto mine = parts.find(deps_.self);
  if (mine == parts.end() || mine->second.empty()) return;

  auto act = std::make_shared<Activation>();
  act->exec = msg.exec_id;
  act->dt = *dt;
  act->slice = std::move(mine->second);

  std::vector<ObjectRef> refs;
  refs.reserve(act->slice.size());
  for (const auto& e : act->slice) refs.push_back(e.ref);
  deps_.store->readahead(refs, std::shared_ptr<const std::atomic<size_t>>(act, &act->next));

  size_t readers = std::min(options_.max_reads_per_activation, act->slice.size());
  act->running = readers;
  ++active_;
  for (size_t i = 0; i < readers; ++i) {
    pool_->submit([this, act] { run_slice(act); });
  }
}

void SenderEngine::run_slice(const std::shared_ptr<Activation>& act) {
  std::vector<DeliveryFrame> pending;
  size_t pending_bytes = 0;
  std::chrono::steady_clock::time_point first_pending;
  auto flush = [&] {
    if (pending.empty()) return;
    deliver_all(act->dt, pending);
    pending.clear();
    pending_bytes = 0;
  };
  for (size_t i = act->next++; i < act->slice.size(); i = act->next++) {
    const IndexedRef& entry = act->slice[i];
    throttle_work_item(options_.admission, *deps_.pressure, *deps_.metrics);
    bool drop = false;
    if (deps_.faults) {
      auto action = deps_.faults->on_deliver(entry.ref);
      if (action.delay.count() > 0) {
        flush();
        std::this_thread::sleep_for(action.delay);
      }
      drop = action.drop;
    }
    DeliveryFrame frame = read_entry(act->exec, entry.index, entry.ref);
    if (drop) continue;
    if (!deps_.send_batch) {
      deliver(act->dt, frame);
      continue;
    }
    if (pending.empty()) first_pending = std::chrono::steady_clock::now();
    pending_bytes += frame.payload.size();
    pending.push_back(std::move(frame));
    if (pending_bytes >= options_.coalesce_bytes ||
        pending.size() >= options_.coalesce_frames ||
        std::chrono::steady_clock::now() - first_pending >= options_.coalesce_window) {
      flush();
    }
  }
  flush();
  if (--act->running == 0) --active_;
}

void SenderEngine::deliver_all(const NodeInfo& dt, std::vector<DeliveryFrame>& frames) {
  if (frames.size() > 1) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        deps_.send_batch(dt, frames, attempt > 0);
        frames_sent_ += frames.size();
        return;
      } catch (const std::exception& e) {
        GB_LOG(kInfo) << "send of " << frames.size() << " frames to " << dt.id
                      << " failed: " << e.what();
      }
    }
  }
  // One at a time, so every frame that still cannot go out gets its own
  // soft error.
  for (const auto& f : frames) deliver(dt, f);
}

DeliveryFrame SenderEngine::read_entry(const ExecutionId& exec, uint32_t index,
                                       const ObjectRef& ref) {
  DeliveryFrame frame;
  frame.exec_id = exec;
  frame.index = index;
  try {
    ReadResult r = deps_.store->read_local(ref);
    if (r.ok()) {
      frame.payload = std::move(r.bytes);
    } else {
      frame.status = FrameStatus::kSoftError;
      frame.reason = *r.soft_error;
    }
  } catch (const std::exception& e) {
    GB_LOG(kWarning) << "read of " << canonical_entry_name(ref)
                     << " failed: " << e.what();
    frame.status = FrameStatus::kSoftError;
    frame.reason = std::string(kReasonIoError);
  }
  return frame;
}

void SenderEngine::deliver(const NodeInfo& dt, const DeliveryFrame& frame) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      deps_.send(dt, frame, attempt > 0);
      ++frames_sent_;
      return;
    } catch (const std::exception& e) {
      GB_LOG(kInfo) << "send to " << dt.id << " failed: " << e.what();
    }
  }
  ++frames_failed_;
  DeliveryFrame soft;
  soft.exec_id = frame.exec_id;
  soft.index = frame.index;
  soft.status = FrameStatus::kSoftError;
  soft.reason = "transport";
  try {
    deps_.send(dt, soft, true);
  } catch (const std::exception& e) {
    GB_LOG(kWarning) << "giving up on " << frame.exec_id.hex() << "#"
                     << frame.index << " to " << dt.id << ": " << e.what();
  }
}

DeliveryFrame SenderEngine::serve_pull(const ExecutionId& exec, uint32_t index,
                                       const ObjectRef& ref) {
  return read_entry(exec, index, ref);
}

}  // namespace gbstore
