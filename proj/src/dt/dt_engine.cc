#include "gbstore/dt/dt_engine.h"

#include <algorithm>
#include <atomic>

#include "gbstore/tar/tar.h"
#include "gbstore/util/log.h"

namespace gbstore {
namespace {

constexpr size_t kRecentAbortsKept = 1024;
constexpr uint32_t kAllEntries = UINT32_MAX;

}  // namespace

struct DtEngine::Execution {
  ExecutionId id;
  BatchRequest request;
  std::vector<std::string> names;
  std::vector<NodeId> owners;
  Clock::time_point created_at;

  std::mutex mu;
  std::condition_variable cv;
  std::vector<uint8_t> resolved;
  // Sparse reorder buffer: only resolved, not yet emitted entries.
  std::map<uint32_t, BatchItemResult> results;
  std::vector<std::optional<Clock::time_point>> deadlines;
  size_t resolved_count = 0;
  size_t local_entries = 0;
  uint32_t next_emit = 0;
  // Index a blocked client waits for; kAllEntries while a buffered
  // response waits for the whole batch.
  std::optional<uint32_t> waiting_for;
  int soft_errors = 0;
  int recovery_attempts = 0;
  bool claimed = false;
  bool emitting = false;
  bool aborted = false;
  bool done = false;
  std::string abort_reason;
};

DtEngine::DtEngine(DtOptions options, DtDeps deps)
    : options_(options), deps_(std::move(deps)) {
  if (!deps_.store || !deps_.metrics || !deps_.pressure || !deps_.cluster_map) {
    throw DtUsageError("DtEngine: missing dependency");
  }
  local_pool_ = std::make_unique<ThreadPool>(std::max<size_t>(1, options_.local_workers));
  recovery_pool_ =
      std::make_unique<ThreadPool>(std::max<size_t>(1, options_.recovery_workers));
  if (options_.run_ticker) {
    ticker_ = std::thread([this] { ticker_loop(); });
  }
}

DtEngine::~DtEngine() {
  {
    std::lock_guard lock(ticker_mu_);
    stopping_ = true;
  }
  ticker_cv_.notify_all();
  if (ticker_.joinable()) ticker_.join();

  abort_all("shutting down");
  local_pool_.reset();
  recovery_pool_.reset();
}

ExecutionId DtEngine::register_request(BatchRequest request,
                                       std::optional<ExecutionId> id,
                                       uint64_t size_hint) {
  if (request.entries.empty()) {
    throw DtUsageError("empty batch");
  }
  auto decision = admit(options_.admission, deps_.pressure->sample(), size_hint);
  if (decision.kind == AdmissionDecision::Kind::kReject429) {
    deps_.metrics->record(metric_event::AdmissionReject{});
    throw AdmissionRejected("memory pressure");
  }

  auto exec = std::make_shared<Execution>();
  exec->id = id ? *id : ExecutionId::generate();
  exec->request = std::move(request);
  exec->created_at = Clock::now();

  size_t n = exec->request.entries.size();
  exec->names.reserve(n);
  exec->owners.reserve(n);
  exec->resolved.assign(n, 0);
  exec->deadlines.assign(n, std::nullopt);

  ClusterMapPtr map = deps_.cluster_map();
  std::vector<uint32_t> local;
  std::vector<ObjectRef> local_refs;
  for (uint32_t i = 0; i < n; ++i) {
    const ObjectRef& ref = exec->request.entries[i];
    exec->names.push_back(canonical_entry_name(ref));
    exec->owners.push_back(owner_of(*map, ref));
    if (exec->owners.back() == deps_.self) {
      local.push_back(i);
      local_refs.push_back(ref);
    } else {
      exec->deadlines[i] = exec->created_at + options_.rxwait_timeout;
    }
  }
  exec->local_entries = local.size();

  {
    std::lock_guard lock(registry_mu_);
    if (!registry_.emplace(exec->id, exec).second) {
      throw DtUsageError("execution id already registered: " + exec->id.hex());
    }
  }
  deps_.metrics->record(metric_event::WorkItems{n});

  if (!local.empty()) {
    auto pending = std::make_shared<std::vector<uint32_t>>(std::move(local));
    auto cursor = std::make_shared<std::atomic<size_t>>(0);
    deps_.store->readahead(local_refs, cursor);
    size_t readers = std::min(std::max<size_t>(1, options_.local_workers), pending->size());
    for (size_t r = 0; r < readers; ++r) {
      local_pool_->submit([this, exec, pending, cursor] {
        for (size_t k = (*cursor)++; k < pending->size(); k = (*cursor)++) {
          read_local_entry(exec, (*pending)[k]);
        }
      });
    }
  }
  return exec->id;
}

void DtEngine::read_local_entry(const ExecutionPtr& exec, uint32_t index) {
  {
    std::lock_guard lock(exec->mu);
    if (exec->aborted || exec->done) return;
  }
  throttle_work_item(options_.admission, *deps_.pressure, *deps_.metrics);
  const ObjectRef& ref = exec->request.entries[index];
  if (deps_.faults) {
    auto action = deps_.faults->on_deliver(ref);
    if (action.delay.count() > 0) std::this_thread::sleep_for(action.delay);
  }
  try {
    ReadResult r = deps_.store->read_local(ref);
    auto result = r.ok() ? BatchItemResult::ok(index, exec->names[index],
                                               std::move(r.bytes))
                         : BatchItemResult::soft_error(index, exec->names[index],
                                                       *r.soft_error);
    resolve(exec, index, std::move(result), false);
  } catch (const std::exception& e) {
    std::lock_guard lock(exec->mu);
    abort_locked(*exec, std::string("local read failed: ") + e.what());
  }
}

DtEngine::ExecutionPtr DtEngine::find(const ExecutionId& id) const {
  std::lock_guard lock(registry_mu_);
  auto it = registry_.find(id);
  return it == registry_.end() ? nullptr : it->second;
}

void DtEngine::accept_delivery(DeliveryFrame frame) {
  ExecutionPtr exec = find(frame.exec_id);
  if (!exec || frame.status == FrameStatus::kActivation) {
    deps_.metrics->record(metric_event::UnknownFrame{});
    return;
  }
  std::unique_lock lock(exec->mu);
  if (frame.index >= exec->resolved.size()) {
    abort_locked(*exec, "delivery index out of range: " +
                            std::to_string(frame.index));
    return;
  }
  const std::string& name = exec->names[frame.index];
  auto result = frame.status == FrameStatus::kOk
                    ? BatchItemResult::ok(frame.index, name, std::move(frame.payload))
                    : BatchItemResult::soft_error(frame.index, name, std::move(frame.reason));
  resolve_locked(*exec, frame.index, std::move(result), true, lock);
}

void DtEngine::resolve(const ExecutionPtr& exec, uint32_t index,
                       BatchItemResult result, bool remote) {
  std::unique_lock lock(exec->mu);
  resolve_locked(*exec, index, std::move(result), remote, lock);
}

void DtEngine::resolve_locked(Execution& exec, uint32_t index,
                              BatchItemResult result, bool remote,
                              std::unique_lock<std::mutex>&) {
  if (exec.aborted || exec.done) return;
  if (exec.resolved[index]) {
    deps_.metrics->record(metric_event::DuplicateFrame{});
    return;
  }
  if (result.status == ItemStatus::kSoftError) {
    std::string reason = result.error_reason.value_or("");
    if (!exec.request.coer) {
      abort_locked(exec, "entry " + std::to_string(index) + " (" +
                             exec.names[index] + "): " + reason);
      return;
    }
    deps_.metrics->record(metric_event::SoftError{});
    if (++exec.soft_errors > options_.max_soft_errors) {
      abort_locked(exec, "soft error limit exceeded (" +
                             std::to_string(exec.soft_errors) + " > " +
                             std::to_string(options_.max_soft_errors) + ")");
      return;
    }
  }
  if (remote) {
    deps_.metrics->record(metric_event::RxWait{
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() -
                                                             exec.created_at)});
  }
  exec.resolved[index] = 1;
  exec.deadlines[index].reset();
  ++exec.resolved_count;
  exec.results.emplace(index, std::move(result));
  if (exec.waiting_for &&
      (*exec.waiting_for == index ||
       (*exec.waiting_for == kAllEntries && exec.resolved_count == exec.resolved.size()))) {
    exec.cv.notify_all();
  }
}

void DtEngine::abort_locked(Execution& exec, std::string reason) {
  if (exec.aborted || exec.done) return;
  exec.aborted = true;
  exec.abort_reason = reason;
  exec.results.clear();
  for (auto& d : exec.deadlines) d.reset();
  deps_.metrics->record(metric_event::HardError{});
  GB_LOG(kInfo) << "execution " << exec.id.hex() << " aborted: " << reason;
  {
    std::lock_guard lock(registry_mu_);
    registry_.erase(exec.id);
    recent_aborts_.emplace_back(exec.id, std::move(reason));
    if (recent_aborts_.size() > kRecentAbortsKept) recent_aborts_.pop_front();
  }
  exec.cv.notify_all();
}

void DtEngine::finish(const ExecutionId& id) {
  std::lock_guard lock(registry_mu_);
  registry_.erase(id);
}

EmitResult DtEngine::claim(const ExecutionPtr& exec) {
  std::unique_lock lock(exec->mu);
  EmitResult r;
  r.streaming = exec->request.strm;
  if (exec->claimed) {
    r.status = EmitStatus::kAlreadyClaimed;
    return r;
  }
  exec->claimed = true;
  size_t n = exec->resolved.size();
  exec->waiting_for = exec->request.strm ? 0 : kAllEntries;
  exec->cv.wait(lock, [&] {
    return exec->aborted ||
           (exec->request.strm ? exec->resolved[0] != 0 : exec->resolved_count == n);
  });
  exec->waiting_for.reset();
  if (exec->aborted) {
    r.status = EmitStatus::kAborted;
    r.reason = exec->abort_reason;
  } else if (!exec->request.strm) {
    r.bytes = archive_size_locked(*exec);
  }
  return r;
}

uint64_t DtEngine::archive_size_locked(const Execution& exec) {
  uint64_t n = 2 * tar::kBlockSize;
  for (const auto& [i, item] : exec.results) {
    n += item.status == ItemStatus::kOk
             ? tar::entry_archive_size(item.name, item.payload.size())
             : tar::entry_archive_size(item.name, 0, item.error_reason.value_or(""));
  }
  return n;
}

EmitResult DtEngine::wait_ready(const ExecutionId& id) {
  ExecutionPtr exec = find(id);
  if (!exec) {
    EmitResult r;
    if (auto reason = abort_reason(id)) {
      r.status = EmitStatus::kAborted;
      r.reason = *reason;
    } else {
      r.status = EmitStatus::kUnknown;
    }
    return r;
  }
  return claim(exec);
}

EmitResult DtEngine::emit(const ExecutionId& id, ClientSink& sink) {
  ExecutionPtr exec = find(id);
  EmitResult r;
  if (!exec) return wait_ready(id);
  bool need_claim;
  {
    std::lock_guard lock(exec->mu);
    if (exec->emitting) {
      r.status = EmitStatus::kAlreadyClaimed;
      return r;
    }
    exec->emitting = true;
    need_claim = !exec->claimed;
  }
  if (need_claim) {
    r = claim(exec);
    if (r.status != EmitStatus::kCompleted) return r;
  }
  r.streaming = exec->request.strm;

  tar::TarWriter writer([&sink](std::string_view b) { return sink.write(b); });
  size_t n = exec->resolved.size();
  if (!r.streaming) {
    uint64_t size;
    {
      std::lock_guard lock(exec->mu);
      size = archive_size_locked(*exec);
    }
    sink.expect(size);
  }
  try {
    for (uint32_t i = 0; i < n; ++i) {
      BatchItemResult item;
      {
        std::unique_lock lock(exec->mu);
        if (!exec->aborted && !exec->resolved[i]) {
          lock.unlock();
          if (!sink.flush()) throw tar::SinkError("flush failed");
          lock.lock();
        }
        exec->waiting_for = i;
        exec->cv.wait(lock, [&] { return exec->aborted || exec->resolved[i] != 0; });
        exec->waiting_for.reset();
        if (exec->aborted) {
          r.status = EmitStatus::kAborted;
          r.reason = exec->abort_reason;
          r.bytes = writer.bytes_written();
          return r;
        }
        auto it = exec->results.find(i);
        item = std::move(it->second);
        exec->results.erase(it);
        exec->next_emit = i + 1;
      }
      if (item.status == ItemStatus::kOk) {
        writer.emit_entry(item.name, item.payload);
        deps_.metrics->record(metric_event::Delivered{
            exec->request.entries[i].is_archive_member(), item.payload.size()});
      } else {
        writer.emit_placeholder(item.name, item.error_reason.value_or(""));
      }
    }
    writer.finalize();
    if (!sink.flush()) throw tar::SinkError("flush failed");
  } catch (const tar::SinkError&) {
    std::lock_guard lock(exec->mu);
    abort_locked(*exec, "client disconnected");
    r.status = EmitStatus::kAborted;
    r.reason = exec->abort_reason;
    r.bytes = writer.bytes_written();
    return r;
  }
  {
    std::lock_guard lock(exec->mu);
    exec->done = true;
    for (auto& d : exec->deadlines) d.reset();
  }
  finish(id);
  r.status = EmitStatus::kCompleted;
  r.bytes = writer.bytes_written();
  return r;
}

void DtEngine::abort_all(const std::string& reason) {
  std::vector<ExecutionPtr> live;
  {
    std::lock_guard lock(registry_mu_);
    for (auto& [id, exec] : registry_) live.push_back(exec);
  }
  for (auto& exec : live) {
    std::lock_guard lock(exec->mu);
    abort_locked(*exec, reason);
  }
}

void DtEngine::cancel(const ExecutionId& id, const std::string& reason) {
  ExecutionPtr exec = find(id);
  if (!exec) return;
  std::lock_guard lock(exec->mu);
  abort_locked(*exec, reason);
}

void DtEngine::handle_timeout(const ExecutionId& id, uint32_t index,
                              Clock::time_point now) {
  ExecutionPtr exec = find(id);
  if (!exec) return;
  std::unique_lock lock(exec->mu);
  if (exec->aborted || exec->done || index >= exec->resolved.size() ||
      exec->resolved[index]) {
    return;
  }
  if (exec->recovery_attempts < options_.gfn_attempts) {
    int attempt = ++exec->recovery_attempts;
    deps_.metrics->record(metric_event::RecoveryAttempt{});
    exec->deadlines[index] = now + options_.rxwait_timeout;
    bool broadcast = attempt == options_.gfn_attempts;
    lock.unlock();
    recovery_pool_->submit(
        [this, exec, index, broadcast] { run_pull(exec, index, broadcast); });
    return;
  }
  exec->deadlines[index].reset();
  resolve_locked(*exec, index,
                 BatchItemResult::soft_error(index, exec->names[index],
                                             std::string(kReasonTimeout)),
                 true, lock);
}

void DtEngine::run_pull(const ExecutionPtr& exec, uint32_t index, bool broadcast) {
  {
    std::lock_guard lock(exec->mu);
    if (exec->aborted || exec->done || exec->resolved[index]) return;
  }
  if (!deps_.pull) {
    deps_.metrics->record(metric_event::RecoveryFailure{});
    return;
  }
  ClusterMapPtr map = deps_.cluster_map();
  const ObjectRef& ref = exec->request.entries[index];
  const NodeId& owner = exec->owners[index];

  // Owner first; on the broadcast attempt every other target follows.
  std::vector<const NodeInfo*> order;
  if (const NodeInfo* n = map->find_target(owner)) order.push_back(n);
  if (broadcast) {
    for (const NodeInfo& t : map->targets()) {
      if (t.id != owner && t.id != deps_.self) order.push_back(&t);
    }
  }

  std::optional<DeliveryFrame> owner_soft;
  for (const NodeInfo* node : order) {
    std::optional<DeliveryFrame> frame;
    try {
      frame = deps_.pull(*node, exec->id, index, ref);
    } catch (const std::exception& e) {
      GB_LOG(kDebug) << "pull from " << node->id << " failed: " << e.what();
    }
    if (!frame) continue;
    if (frame->status == FrameStatus::kOk) {
      frame->index = index;
      frame->exec_id = exec->id;
      accept_delivery(*frame);
      return;
    }
    if (node->id == owner) owner_soft = std::move(frame);
  }
  if (owner_soft) {
    owner_soft->index = index;
    owner_soft->exec_id = exec->id;
    accept_delivery(*owner_soft);
    return;
  }
  deps_.metrics->record(metric_event::RecoveryFailure{});
}

void DtEngine::tick(Clock::time_point now) {
  std::vector<ExecutionPtr> live;
  {
    std::lock_guard lock(registry_mu_);
    live.reserve(registry_.size());
    for (auto& [id, exec] : registry_) live.push_back(exec);
  }
  for (auto& exec : live) {
    std::vector<uint32_t> expired;
    {
      std::lock_guard lock(exec->mu);
      if (exec->aborted || exec->done) continue;
      if (!exec->claimed && now - exec->created_at > options_.client_wait_timeout) {
        abort_locked(*exec, "client never connected");
        continue;
      }
      for (uint32_t i = 0; i < exec->deadlines.size(); ++i) {
        if (exec->deadlines[i] && *exec->deadlines[i] <= now) expired.push_back(i);
      }
    }
    for (uint32_t i : expired) handle_timeout(exec->id, i, now);
  }
}

void DtEngine::ticker_loop() {
  std::unique_lock lock(ticker_mu_);
  while (!ticker_cv_.wait_for(lock, options_.tick_period, [this] { return stopping_; })) {
    lock.unlock();
    tick(Clock::now());
    lock.lock();
  }
}

size_t DtEngine::registry_size() const {
  std::lock_guard lock(registry_mu_);
  return registry_.size();
}

std::optional<std::string> DtEngine::abort_reason(const ExecutionId& id) const {
  std::lock_guard lock(registry_mu_);
  for (auto it = recent_aborts_.rbegin(); it != recent_aborts_.rend(); ++it) {
    if (it->first == id) return it->second;
  }
  return std::nullopt;
}

std::optional<DtEngine::ExecutionView> DtEngine::inspect(const ExecutionId& id) const {
  ExecutionPtr exec = find(id);
  if (!exec) return std::nullopt;
  std::lock_guard lock(exec->mu);
  ExecutionView v;
  v.batch_size = exec->resolved.size();
  v.resolved = exec->resolved_count;
  v.next_emit = exec->next_emit;
  v.soft_errors = exec->soft_errors;
  v.recovery_attempts = exec->recovery_attempts;
  v.local_entries = exec->local_entries;
  v.armed_deadlines = std::count_if(exec->deadlines.begin(), exec->deadlines.end(),
                                    [](const auto& d) { return d.has_value(); });
  return v;
}

}  // namespace gbstore
