#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "gbstore/util/hash.h"
#include "gbstore/util/net.h"
#include "gbstore/util/thread_pool.h"

namespace gbstore {
namespace {

TEST(Net, ParseHostPort) {
  auto hp = parse_host_port("127.0.0.1:8080");
  ASSERT_TRUE(hp);
  EXPECT_EQ(hp->host, "127.0.0.1");
  EXPECT_EQ(hp->port, 8080);
  EXPECT_EQ(hp->str(), "127.0.0.1:8080");
  EXPECT_TRUE(parse_host_port("node-3:1"));
  EXPECT_FALSE(parse_host_port("127.0.0.1"));
  EXPECT_FALSE(parse_host_port("127.0.0.1:"));
  EXPECT_FALSE(parse_host_port("127.0.0.1:65536"));
  EXPECT_FALSE(parse_host_port("127.0.0.1:0"));
  EXPECT_FALSE(parse_host_port("h:12x"));
  EXPECT_FALSE(parse_host_port(":80"));
}

TEST(Net, ParseHttpUrl) {
  auto u = parse_http_url("http://10.0.0.1:8081/v1/batch/abc?x=1");
  ASSERT_TRUE(u);
  EXPECT_EQ(u->endpoint.str(), "10.0.0.1:8081");
  EXPECT_EQ(u->path_and_query, "/v1/batch/abc?x=1");
  auto bare = parse_http_url("http://h:1");
  ASSERT_TRUE(bare);
  EXPECT_EQ(bare->path_and_query, "/");
  EXPECT_FALSE(parse_http_url("https://h:1/"));
  EXPECT_FALSE(parse_http_url("h:1/x"));
}

TEST(Net, UrlEncode) {
  EXPECT_EQ(url_encode("a-b_c.d~e", false), "a-b_c.d~e");
  EXPECT_EQ(url_encode("a b/c", false), "a%20b%2Fc");
  EXPECT_EQ(url_encode("a b/c", true), "a%20b/c");
  EXPECT_EQ(url_encode("\xff?&=", false), "%FF%3F%26%3D");
}

TEST(Net, PickFreePortIsUsable) {
  uint16_t p = pick_free_port();
  EXPECT_GT(p, 0);
}

TEST(Hash, PartsAreSeparated) {
  EXPECT_EQ(hash64({"a", "b"}), hash64({"a", "b"}));
  EXPECT_NE(hash64({"ab", "c"}), hash64({"a", "bc"}));
  EXPECT_NE(hash64({"abc"}), hash64({"ab", "c"}));
  EXPECT_NE(hash64({"", "x"}), hash64({"x", ""}));
  std::set<uint64_t> seen;
  for (int i = 0; i < 10'000; ++i) seen.insert(hash64({"t0", std::to_string(i)}));
  EXPECT_EQ(seen.size(), 10'000u);
}

TEST(ThreadPool, RunsEveryTaskAndDrainsOnDestruction) {
  std::atomic<int> count{0};
  {
    ThreadPool pool(4);
    EXPECT_EQ(pool.size(), 4u);
    for (int i = 0; i < 1000; ++i) pool.submit([&] { ++count; });
    pool.wait_idle();
    EXPECT_EQ(count.load(), 1000);
    for (int i = 0; i < 100; ++i) pool.submit([&] { ++count; });
  }
  EXPECT_EQ(count.load(), 1100);
}

TEST(ThreadPool, SingleWorkerIsFifo) {
  std::vector<int> order;
  ThreadPool pool(1);
  for (int i = 0; i < 50; ++i) pool.submit([&, i] { order.push_back(i); });
  pool.wait_idle();
  ASSERT_EQ(order.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(order[i], i);
  EXPECT_EQ(pool.queued(), 0u);
}

}  // namespace
}  // namespace gbstore
