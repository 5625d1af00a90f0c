#include <gtest/gtest.h>

#include <fstream>

#include "gbstore/harness/config.h"
#include "support.h"

namespace gbstore {
namespace {

constexpr const char* kFourNodes = R"(# local test cluster
[cluster]
name = "local"

[[proxy]]
id = "p0"
listen = "127.0.0.1:8080"

[[target]]
id = "t0"
listen = "127.0.0.1:9000"
store_root = "/tmp/gb/t0"

[[target]]
id = "t1"
listen = "127.0.0.1:9001"
peer = "127.0.0.1:19001"
store_root = "data/t1"

[[target]]
id = "t2"
listen = "127.0.0.1:9002"
store_root = "/tmp/gb/t2"   # trailing comment

[tuning]
rxwait_timeout_ms = 2500
max_soft_errors = 3
busy_threshold = 0.5
)";

TEST(Config, ParsesOneProxyThreeTargets) {
  ClusterConfig c = parse_config(kFourNodes, "/base");
  EXPECT_EQ(c.name, "local");
  ASSERT_EQ(c.proxies.size(), 1u);
  ASSERT_EQ(c.targets.size(), 3u);
  EXPECT_EQ(c.proxies[0].id, "p0");
  EXPECT_EQ(c.targets[0].peer, "127.0.0.1:10000");
  EXPECT_EQ(c.targets[1].peer, "127.0.0.1:19001");
  EXPECT_EQ(c.targets[1].store_root, "/base/data/t1");
  EXPECT_EQ(c.targets[2].store_root, "/tmp/gb/t2");
  EXPECT_EQ(c.tuning.rxwait_timeout_ms, 2500);
  EXPECT_EQ(c.tuning.max_soft_errors, 3);
  EXPECT_DOUBLE_EQ(c.tuning.busy_threshold, 0.5);
  EXPECT_EQ(c.tuning.gfn_attempts, 2);

  ClusterMap m = c.to_map();
  EXPECT_EQ(m.version(), 1u);
  EXPECT_EQ(m.targets().size(), 3u);
  EXPECT_TRUE(c.is_target("t2"));
  EXPECT_FALSE(c.is_target("p0"));
  ASSERT_NE(c.find("p0"), nullptr);
  EXPECT_EQ(c.find("zz"), nullptr);
}

TEST(Config, DefaultsWhenTuningOmitted) {
  std::string text = kFourNodes;
  text.resize(text.find("[tuning]"));
  ClusterConfig c = parse_config(text);
  Tuning d;
  EXPECT_EQ(c.tuning.rxwait_timeout_ms, 10'000);
  EXPECT_EQ(c.tuning.gfn_attempts, 2);
  EXPECT_EQ(c.tuning.max_soft_errors, 8);
  EXPECT_EQ(c.tuning.idle_timeout_s, 60);
  EXPECT_DOUBLE_EQ(c.tuning.mem_critical, 0.90);
  EXPECT_DOUBLE_EQ(c.tuning.busy_threshold, 0.85);
  EXPECT_EQ(c.tuning.throttle_step_ms, d.throttle_step_ms);
}

TEST(Config, DuplicateIdNamesTheId) {
  std::string text = kFourNodes;
  text.replace(text.find("id = \"t2\""), 9, "id = \"t0\"");
  try {
    parse_config(text);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'t0'"), std::string::npos) << e.what();
    EXPECT_GT(e.line(), 0);
  }
}

TEST(Config, DiagnosticsCarryLineNumbers) {
  struct Case {
    std::string text;
    int line;
  };
  const std::string nodes =
      "[[proxy]]\nid=\"p\"\nlisten=\"h:1\"\n"
      "[[target]]\nid=\"t\"\nlisten=\"h:2\"\nstore_root=\"/r\"\n";
  std::vector<Case> cases = {
      {"[cluster]\nname = local\n", 2},
      {"[cluster]\nname = \"x\"\nbogus = 1\n" + nodes, 3},
      {"[cluster]\nname = \"x\"\n[tuning]\nmax_soft_errors = -1\n" + nodes, 4},
      {"[cluster]\nname = \"x\"\n[tuning]\nbusy_threshold = 1.5\n" + nodes, 4},
      {"[cluster]\nname = \"x\"\n[tuning]\nwarp = 1\n" + nodes, 4},
      {"[cluster\n", 1},
      {"name = \"x\"\n", 1},
      {"[cluster]\nname = \"x\"\nname = \"y\"\n", 3},
      {"[cluster]\n[weird]\n", 2},
  };
  for (const auto& c : cases) {
    try {
      parse_config(c.text);
      ADD_FAILURE() << "accepted: " << c.text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.line(), c.line) << e.what();
    }
  }
  EXPECT_THROW(parse_config("[cluster]\nname = \"x\"\n"), ConfigError);
}

TEST(Config, ListenAddressesMustBeDistinct) {
  std::string text = kFourNodes;
  text.replace(text.find("127.0.0.1:9002"), 14, "127.0.0.1:9001");
  EXPECT_THROW(parse_config(text), ConfigError);
  // A peer port colliding with another node's derived one.
  std::string text2 = kFourNodes;
  text2.replace(text2.find("127.0.0.1:19001"), 15, "127.0.0.1:10000");
  EXPECT_THROW(parse_config(text2), ConfigError);
}

TEST(Config, RenderParseRoundTrip) {
  ClusterConfig c = parse_config(kFourNodes, "/base");
  std::string rendered = render_config(c);
  ClusterConfig back = parse_config(rendered);
  EXPECT_EQ(render_config(back), rendered);
  EXPECT_EQ(back.targets[1].store_root, "/base/data/t1");
  EXPECT_EQ(back.targets[0].peer, "127.0.0.1:10000");
  EXPECT_EQ(back.tuning.max_soft_errors, 3);
}

TEST(Config, LoadResolvesRelativeToFile) {
  testing::TempDir dir;
  std::ofstream(dir / "cluster.toml") << kFourNodes;
  ClusterConfig c = load_config(dir / "cluster.toml");
  EXPECT_EQ(c.targets[1].store_root, (dir / "data/t1").string());
  EXPECT_THROW(load_config(dir / "absent.toml"), ConfigError);
}

}  // namespace
}  // namespace gbstore
