#include <gtest/gtest.h>

#include <sys/wait.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "gbstore/harness/harness.h"
#include "support.h"

namespace gbstore {
namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run(const std::string& cmd) {
  CmdResult r;
  FILE* f = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!f) return r;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) r.output.append(buf, n);
  int status = ::pclose(f);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class ToolsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = make_local_config(1, 2, dir_ / "stores");
    config_path_ = dir_ / "cluster.toml";
    std::ofstream(config_path_) << render_config(config_);
    state_ = (dir_ / "state.json").string();
  }
  void TearDown() override {
    if (fs::exists(state_)) run(ctl() + " down");
  }
  std::string ctl() const {
    return testing::tool_binary("clusterctl").string() + " --state " + state_;
  }

  testing::TempDir dir_;
  ClusterConfig config_;
  fs::path config_path_;
  std::string state_;
};

TEST_F(ToolsTest, ClusterctlLifecycle) {
  CmdResult up = run(ctl() + " up " + config_path_.string() + " --binary " +
                     testing::node_binary().string());
  ASSERT_EQ(up.exit_code, 0) << up.output;
  EXPECT_NE(up.output.find("gateway http://" + config_.proxies[0].listen), std::string::npos);

  CmdResult status = run(ctl() + " status");
  ASSERT_EQ(status.exit_code, 0);
  for (const auto& t : config_.targets) {
    EXPECT_NE(status.output.find(t.id + " pid="), std::string::npos);
  }
  EXPECT_EQ(status.output.find(" down"), std::string::npos) << status.output;

  const NodeId victim = config_.targets[1].id;
  ASSERT_EQ(run(ctl() + " kill " + victim).exit_code, 0);
  GatewayClient client("http://" + config_.proxies[0].listen);
  EXPECT_NE(client.get(config_.targets[1].listen, "/health").status, 200);
  EXPECT_NE(run(ctl() + " status").output.find(victim + " pid=0 down"), std::string::npos);

  CmdResult restart = run(ctl() + " restart " + victim);
  ASSERT_EQ(restart.exit_code, 0) << restart.output;
  EXPECT_EQ(client.get(config_.targets[1].listen, "/health").status, 200);

  EXPECT_NE(run(ctl() + " kill nobody").exit_code, 0);

  ASSERT_EQ(client.put_object({"b", "o", std::nullopt}, "x").status, 200);
  ASSERT_EQ(run(ctl() + " down --keep").exit_code, 0);
  EXPECT_FALSE(fs::exists(state_));
  for (const auto& t : config_.targets) EXPECT_TRUE(fs::exists(t.store_root));
  EXPECT_NE(client.get(config_.proxies[0].listen, "/health").status, 200);
}

TEST_F(ToolsTest, GbloadPrepareAndRun) {
  ASSERT_EQ(run(ctl() + " up " + config_path_.string() + " --binary " +
                testing::node_binary().string())
                .exit_code,
            0);
  std::string gateway = "http://" + config_.proxies[0].listen;
  std::string gbload = testing::tool_binary("gbload").string() + " --gateway " + gateway;

  CmdResult prep = run(gbload + " --prepare 40 --prepare-only --size 2KiB");
  ASSERT_EQ(prep.exit_code, 0) << prep.output;
  EXPECT_NE(prep.output.find("prepared 40 objects of 2048 bytes"), std::string::npos);

  fs::path json_path = dir_ / "report.json";
  CmdResult bench = run(gbload + " --count 40 --size 2KiB --batch 8 --workers 2 --duration 1 --json " +
                        json_path.string());
  ASSERT_EQ(bench.exit_code, 0) << bench.output;
  EXPECT_NE(bench.output.find("throughput"), std::string::npos);
  auto j = nlohmann::json::parse(std::ifstream(json_path));
  EXPECT_EQ(j["mode"], "getbatch");
  EXPECT_EQ(j["batch_size"], 8);
  EXPECT_EQ(j["object_size"], 2048);
  EXPECT_GT(j["request_count"].get<uint64_t>(), 0u);
  EXPECT_EQ(j["error_count"], 0);

  CmdResult get = run(gbload + " --mode get --count 40 --size 2KiB --workers 2 --duration 1");
  EXPECT_EQ(get.exit_code, 0) << get.output;
  EXPECT_NE(get.output.find("mode=get "), std::string::npos);

  EXPECT_NE(run(gbload + " --prepare-only").exit_code, 0);
  EXPECT_NE(run(gbload + " --workers 0 --count 40 --size 2KiB").exit_code, 0);
  EXPECT_NE(run(gbload + " --mode bogus").exit_code, 0);
}

}  // namespace
}  // namespace gbstore
