// clusterctl: start, stop and disturb a local multi-process cluster.

#include <signal.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "gbstore/harness/config.h"
#include "gbstore/harness/harness.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path self_dir() {
  std::error_code ec;
  fs::path exe = fs::read_symlink("/proc/self/exe", ec);
  return ec ? fs::current_path() : exe.parent_path();
}

json load_state(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("no cluster state at " + p.string());
  return json::parse(in);
}

void save_state(const fs::path& p, const json& state) {
  std::ofstream out(p, std::ios::trunc);
  out << state.dump(2) << "\n";
}

pid_t start(const json& state, const std::string& id) {
  gbstore::SpawnOptions so;
  so.node_binary = state.at("binary").get<std::string>();
  so.config_path = state.at("config").get<std::string>();
  so.log_path = fs::path(state.at("log_dir").get<std::string>()) / (id + ".log");
  so.debug_hooks = state.value("debug_hooks", true);
  so.tie_to_parent = false;
  return gbstore::spawn_node(so, id);
}

void wait_or_throw(const gbstore::ClusterConfig& config, const std::string& id) {
  const auto* n = config.find(id);
  if (!gbstore::wait_healthy(n->listen, std::chrono::seconds(15))) {
    throw std::runtime_error("node " + id + " did not become healthy");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"local cluster control"};
  app.require_subcommand(1);
  std::string state_path = ".clusterctl.json";
  app.add_option("--state", state_path, "state file");

  auto* up = app.add_subcommand("up", "launch every node in a config");
  std::string config_path, binary, log_dir;
  bool no_debug = false;
  up->add_option("config", config_path, "cluster config")->required();
  up->add_option("--binary", binary, "gbnode binary");
  up->add_option("--log-dir", log_dir, "where node logs go");
  up->add_flag("--no-debug-hooks", no_debug, "disable /v1/debug endpoints");

  auto* down = app.add_subcommand("down", "stop every node");
  bool keep = false;
  down->add_flag("--keep", keep, "keep store directories");

  std::string node_id;
  auto* kill = app.add_subcommand("kill", "SIGKILL one node");
  kill->add_option("id", node_id)->required();
  auto* restart = app.add_subcommand("restart", "restart one node");
  restart->add_option("id", node_id)->required();
  auto* status = app.add_subcommand("status", "show node processes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (up->parsed()) {
      fs::path cfg = fs::absolute(config_path);
      auto config = gbstore::load_config(cfg);
      json state;
      state["config"] = cfg.string();
      state["binary"] = binary.empty() ? (self_dir() / "gbnode").string()
                                       : fs::absolute(binary).string();
      state["log_dir"] = log_dir.empty() ? cfg.parent_path().string()
                                         : fs::absolute(log_dir).string();
      state["debug_hooks"] = !no_debug;
      state["nodes"] = json::object();
      for (const auto* list : {&config.targets, &config.proxies}) {
        for (const auto& n : *list) state["nodes"][n.id] = start(state, n.id);
      }
      save_state(state_path, state);
      for (const auto* list : {&config.targets, &config.proxies}) {
        for (const auto& n : *list) wait_or_throw(config, n.id);
      }
      std::cout << "cluster '" << config.name << "' up: gateway http://"
                << config.proxies.front().listen << "\n";
      return 0;
    }

    json state = load_state(state_path);
    auto config = gbstore::load_config(state.at("config").get<std::string>());
    if (down->parsed()) {
      for (auto& [id, pid] : state["nodes"].items()) {
        gbstore::stop_process(pid.get<pid_t>(), std::chrono::seconds(5));
      }
      if (!keep) {
        std::error_code ec;
        for (const auto& t : config.targets) fs::remove_all(t.store_root, ec);
      }
      fs::remove(state_path);
      return 0;
    }
    if (kill->parsed() || restart->parsed()) {
      if (!state["nodes"].contains(node_id)) {
        throw std::runtime_error("unknown node " + node_id);
      }
      pid_t pid = state["nodes"][node_id].get<pid_t>();
      if (kill->parsed()) {
        ::kill(pid, SIGKILL);
        state["nodes"][node_id] = 0;
      } else {
        gbstore::stop_process(pid, std::chrono::seconds(5));
        state["nodes"][node_id] = start(state, node_id);
        wait_or_throw(config, node_id);
      }
      save_state(state_path, state);
      return 0;
    }
    if (status->parsed()) {
      for (auto& [id, pid] : state["nodes"].items()) {
        bool alive = gbstore::process_alive(pid.get<pid_t>());
        std::cout << id << " pid=" << pid << " " << (alive ? "up" : "down") << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "clusterctl: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
