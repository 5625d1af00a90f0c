#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <random>
#include <thread>

#include "gbstore/tar/tar.h"
#include "support.h"

namespace gbstore {
namespace {

using namespace std::chrono_literals;
using nlohmann::json;

std::string shard_of(const std::vector<std::pair<std::string, std::string>>& members) {
  std::string out;
  tar::TarWriter w([&](std::string_view b) {
    out.append(b);
    return true;
  });
  for (const auto& [n, d] : members) w.emit_entry(n, d);
  w.finalize();
  return out;
}

class E2E : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    Tuning t;
    t.rxwait_timeout_ms = 800;
    t.gfn_attempts = 1;
    t.max_soft_errors = 4;
    cluster_ = new testing::InProcCluster(1, 4, t);
    client_ = new GatewayClient(cluster_->gateway_url());
    std::mt19937_64 rng(5);
    for (int i = 0; i < 60; ++i) {
      ObjectRef r{"data", "o-" + std::to_string(i), std::nullopt};
      std::string content = testing::random_bytes(rng, 1 + rng() % 30'000);
      ASSERT_EQ(client_->put_object(r, content).status, 200);
      objects_.emplace_back(r, content);
    }
    ASSERT_EQ(client_->put_object({"shards", "s0.tar", std::nullopt},
                                  shard_of({{"a.txt", "alpha"}, {"b/c.bin", "charlie"}}))
                  .status,
              200);
  }
  static void TearDownTestSuite() {
    delete client_;
    delete cluster_;
  }
  void TearDown() override {
    for (size_t i = 0; i < cluster_->target_count(); ++i) {
      cluster_->target(i).faults().clear();
      cluster_->target(i).pressure().inject(std::nullopt);
    }
  }

  static BatchRequest batch(std::vector<ObjectRef> refs, bool coer = false, bool strm = false) {
    BatchRequest b;
    b.entries = std::move(refs);
    b.coer = coer;
    b.strm = strm;
    return b;
  }

  // Object names owned by `target` under the live map.
  static ObjectRef owned_by(const NodeId& target, const std::string& prefix) {
    for (int i = 0;; ++i) {
      ObjectRef r{"miss", prefix + std::to_string(i), std::nullopt};
      if (owner_of(*cluster_->map(), r) == target) return r;
    }
  }

  static testing::InProcCluster* cluster_;
  static GatewayClient* client_;
  static std::vector<std::pair<ObjectRef, std::string>> objects_;
};

testing::InProcCluster* E2E::cluster_ = nullptr;
GatewayClient* E2E::client_ = nullptr;
std::vector<std::pair<ObjectRef, std::string>> E2E::objects_;

TEST_F(E2E, BatchMatchesPerObjectGets) {
  for (bool strm : {false, true}) {
    std::vector<ObjectRef> refs;
    for (auto& [r, c] : objects_) refs.push_back(r);
    BatchReply reply = client_->get_batch(batch(refs, false, strm));
    ASSERT_EQ(reply.status, 200) << reply.error;
    ASSERT_TRUE(reply.complete);
    ASSERT_EQ(reply.items.size(), objects_.size());
    for (size_t i = 0; i < objects_.size(); ++i) {
      EXPECT_EQ(reply.items[i].name, canonical_entry_name(objects_[i].first));
      EXPECT_EQ(reply.items[i].payload, objects_[i].second);
      EXPECT_EQ(testing::get_via_gateway(*client_, objects_[i].first), objects_[i].second);
    }
    EXPECT_EQ(reply.archive_bytes % 512, 0u);
  }
}

TEST_F(E2E, ReversedAndDuplicatedEntries) {
  std::vector<ObjectRef> refs;
  std::vector<std::string> want;
  for (int i = 9; i >= 0; --i) {
    refs.push_back(objects_[i].first);
    want.push_back(objects_[i].second);
    refs.push_back(objects_[0].first);
    want.push_back(objects_[0].second);
  }
  BatchReply reply = client_->get_batch(batch(refs));
  ASSERT_TRUE(reply.complete) << reply.error;
  ASSERT_EQ(reply.items.size(), want.size());
  for (size_t i = 0; i < want.size(); ++i) EXPECT_EQ(reply.items[i].payload, want[i]);
}

TEST_F(E2E, ShardMembersAndWholeObjectsMixed) {
  std::vector<ObjectRef> refs = {{"shards", "s0.tar", "b/c.bin"},
                                 objects_[3].first,
                                 {"shards", "s0.tar", "a.txt"},
                                 {"shards", "s0.tar", std::nullopt}};
  BatchReply reply = client_->get_batch(batch(refs));
  ASSERT_TRUE(reply.complete) << reply.error;
  ASSERT_EQ(reply.items.size(), 4u);
  EXPECT_EQ(reply.items[0].name, "shards/s0.tar/b/c.bin");
  EXPECT_EQ(reply.items[0].payload, "charlie");
  EXPECT_EQ(reply.items[1].payload, objects_[3].second);
  EXPECT_EQ(reply.items[2].payload, "alpha");
  EXPECT_EQ(reply.items[3].payload.size() % 512, 0u);
}

TEST_F(E2E, MissingEntriesBecomePlaceholdersUnderCoer) {
  std::vector<ObjectRef> refs = {objects_[0].first, {"data", "absent-1", std::nullopt},
                                 objects_[1].first, {"shards", "s0.tar", "nope"},
                                 {"data", "absent-2", std::nullopt}};
  for (bool strm : {false, true}) {
    BatchReply reply = client_->get_batch(batch(refs, true, strm));
    ASSERT_TRUE(reply.complete) << reply.error;
    ASSERT_EQ(reply.items.size(), 5u);
    std::vector<std::optional<std::string>> soft;
    for (auto& it : reply.items) soft.push_back(it.soft_error);
    EXPECT_EQ(soft, (std::vector<std::optional<std::string>>{
                        std::nullopt, "not_found", std::nullopt, "member_not_found",
                        "not_found"}));
    EXPECT_EQ(reply.items[2].payload, objects_[1].second);
  }
}

TEST_F(E2E, MissingEntryWithoutCoerFails) {
  auto before = cluster_->totals();
  BatchReply reply =
      client_->get_batch(batch({objects_[0].first, {"data", "absent", std::nullopt}}));
  EXPECT_FALSE(reply.complete);
  EXPECT_EQ(reply.status, 500);
  auto after = cluster_->totals();
  EXPECT_EQ(after[Counter::kHardErrors] - before[Counter::kHardErrors], 1u);

  BatchReply streamed =
      client_->get_batch(batch({objects_[0].first, {"data", "absent", std::nullopt}}, false, true));
  EXPECT_FALSE(streamed.complete);
}

TEST_F(E2E, SoftErrorLimitEnforced) {
  std::vector<ObjectRef> refs;
  for (int i = 0; i < 5; ++i) refs.push_back({"data", "gone-" + std::to_string(i), std::nullopt});
  EXPECT_FALSE(client_->get_batch(batch(refs, true)).complete);
  refs.pop_back();
  BatchReply ok = client_->get_batch(batch(refs, true));
  EXPECT_TRUE(ok.complete);
  EXPECT_EQ(ok.items.size(), 4u);
}

TEST_F(E2E, ColocationPicksMajorityOwnerAsDt) {
  auto map = cluster_->map();
  std::map<NodeId, std::vector<ObjectRef>> by_owner;
  for (auto& [r, c] : objects_) by_owner[owner_of(*map, r)].push_back(r);
  for (const auto& t : map->targets()) {
    auto& mine = by_owner[t.id];
    if (mine.size() < 3) continue;
    std::vector<ObjectRef> refs = {mine[0], mine[1], mine[2]};
    for (auto& [other, list] : by_owner) {
      if (other != t.id && !list.empty()) {
        refs.push_back(list[0]);
        break;
      }
    }
    BatchOptions o;
    o.coloc_query = 1;
    BatchReply reply = client_->get_batch(batch(refs), o);
    ASSERT_TRUE(reply.complete);
    EXPECT_EQ(reply.dt_endpoint, t.endpoint);
  }
}

TEST_F(E2E, DelayedSenderStillOrdered) {
  std::vector<ObjectRef> refs;
  for (int i = 0; i < 12; ++i) refs.push_back(objects_[i].first);
  cluster_->target(0).faults().set_random_delay(0ms, 150ms, 3);
  cluster_->target(2).faults().set_delay(objects_[5].first.objname, 300ms);
  for (bool strm : {false, true}) {
    BatchReply reply = client_->get_batch(batch(refs, false, strm));
    ASSERT_TRUE(reply.complete) << reply.error;
    for (int i = 0; i < 12; ++i) EXPECT_EQ(reply.items[i].payload, objects_[i].second);
  }
}

TEST_F(E2E, DroppedFrameRecoveredByPull) {
  auto map = cluster_->map();
  ObjectRef victim = objects_[7].first;
  NodeId owner = owner_of(*map, victim);
  // Pin the DT elsewhere so the entry has to cross the network.
  std::vector<ObjectRef> refs;
  NodeId dt;
  for (auto& [r, c] : objects_) {
    NodeId o = owner_of(*map, r);
    if (o == owner) continue;
    if (dt.empty()) dt = o;
    if (o == dt && refs.size() < 3) refs.push_back(r);
  }
  refs.push_back(victim);
  cluster_->target(owner).faults().set_drop(victim.objname);
  auto before = cluster_->totals();
  BatchOptions o;
  o.coloc_query = 1;
  BatchReply reply = client_->get_batch(batch(refs), o);
  ASSERT_TRUE(reply.complete) << reply.error;
  EXPECT_EQ(reply.items.back().payload, objects_[7].second);
  auto after = cluster_->totals();
  EXPECT_EQ(after[Counter::kRecoveryAttempts] - before[Counter::kRecoveryAttempts], 1u);
  EXPECT_EQ(after[Counter::kSoftErrors] - before[Counter::kSoftErrors], 0u);
}

TEST_F(E2E, MemoryPressureRejectsWith429) {
  for (size_t i = 0; i < cluster_->target_count(); ++i) {
    PressureState p;
    p.mem_used_fraction = 0.95;
    cluster_->target(i).pressure().inject(p);
  }
  auto before = cluster_->totals();
  BatchReply reply = client_->get_batch(batch({objects_[0].first}));
  EXPECT_EQ(reply.status, 429);
  auto after = cluster_->totals();
  for (size_t c = 0; c < kNumCounters; ++c) {
    uint64_t delta = after.values[c] - before.values[c];
    EXPECT_EQ(delta, static_cast<Counter>(c) == Counter::kAdmissionRejects ? 1u : 0u)
        << counter_name(static_cast<Counter>(c));
  }
}

TEST_F(E2E, BadRequestsRejectedAtGateway) {
  HttpReply empty = client_->get(client_->gateway_endpoint(), "/v1/batch");
  EXPECT_EQ(empty.status, 400);
  HttpReply bad_coloc = client_->get(client_->gateway_endpoint(), "/v1/batch?coloc=-1");
  EXPECT_EQ(bad_coloc.status, 400);
  BatchReply no_entries = client_->get_batch(batch({}));
  EXPECT_EQ(no_entries.status, 400);
}

TEST_F(E2E, LargeBatch) {
  std::vector<ObjectRef> refs;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) refs.push_back(objects_[rng() % objects_.size()].first);
  BatchReply reply = client_->get_batch(batch(refs, false, true));
  ASSERT_TRUE(reply.complete);
  ASSERT_EQ(reply.entry_count, 2000u);
}

TEST_F(E2E, ClusterEndpointsAndMetrics) {
  ClusterMap m = client_->cluster_map();
  EXPECT_EQ(m.version(), 1u);
  EXPECT_EQ(m.targets().size(), 4u);
  EXPECT_EQ(m.proxies().size(), 1u);
  for (const auto& t : m.targets()) {
    MetricsSnapshot s = client_->metrics(t.endpoint);
    EXPECT_EQ(s.values, cluster_->target(t.id).metrics().snapshot().values);
  }
  HttpReply stats = client_->get(client_->gateway_endpoint(), "/v1/debug/stats");
  ASSERT_EQ(stats.status, 200);
  json j = json::parse(stats.body);
  EXPECT_EQ(j["in_flight"], 0);
  EXPECT_EQ(j["body_parses"].get<uint64_t>(), cluster_->proxy().gateway().body_parse_count());
}

TEST_F(E2E, NoExecutionsLeftBehind) {
  for (size_t i = 0; i < cluster_->target_count(); ++i) {
    EXPECT_EQ(cluster_->target(i).dt().registry_size(), 0u);
  }
}

// Runs last within this binary's suite ordering: it restarts a target.
TEST_F(E2E, ZStoppedTargetYieldsPlaceholdersThenRecovers) {
  auto map = cluster_->map();
  const NodeId victim = map->targets()[3].id;
  const NodeId dt = map->targets()[0].id;
  std::vector<ObjectRef> refs;
  std::vector<bool> on_victim;
  for (auto& [r, c] : objects_) {
    NodeId o = owner_of(*map, r);
    if (o == dt || (o == victim && std::count(on_victim.begin(), on_victim.end(), true) < 3)) {
      refs.push_back(r);
      on_victim.push_back(o == victim);
    }
  }
  ASSERT_GE(refs.size(), 6u);
  cluster_->stop_target(victim);
  BatchOptions o;
  o.coloc_query = 1;
  BatchReply reply = client_->get_batch(batch(refs, true), o);
  ASSERT_TRUE(reply.complete) << reply.error;
  ASSERT_EQ(reply.items.size(), refs.size());
  for (size_t i = 0; i < refs.size(); ++i) {
    EXPECT_EQ(reply.items[i].soft_error.has_value(), on_victim[i]) << i;
    if (on_victim[i]) {
      EXPECT_EQ(*reply.items[i].soft_error, "timeout");
    }
  }
  cluster_->restart_target(victim);
  BatchReply healed = client_->get_batch(batch(refs, true), o);
  ASSERT_TRUE(healed.complete);
  for (const auto& it : healed.items) EXPECT_FALSE(it.soft_error);
}

}  // namespace
}  // namespace gbstore
