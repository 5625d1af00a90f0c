// gbnode: runs one proxy or target from a cluster config.

#include <signal.h>

#include <CLI11.hpp>
#include <iostream>

#include "gbstore/harness/config.h"
#include "gbstore/node/node.h"
#include "gbstore/util/log.h"

int main(int argc, char** argv) {
  CLI::App app{"gbstore node"};
  std::string config_path, id, log_level;
  bool debug_hooks = false;
  app.add_option("--config", config_path, "cluster config file")->required();
  app.add_option("--id", id, "node id from the config")->required();
  app.add_flag("--debug-hooks", debug_hooks, "enable /v1/debug endpoints");
  app.add_option("--log-level", log_level, "debug|info|warning|error");
  CLI11_PARSE(app, argc, argv);

  if (!log_level.empty()) {
    static const std::map<std::string, gbstore::LogLevel> levels = {
        {"debug", gbstore::LogLevel::kDebug},
        {"info", gbstore::LogLevel::kInfo},
        {"warning", gbstore::LogLevel::kWarning},
        {"error", gbstore::LogLevel::kError}};
    auto it = levels.find(log_level);
    if (it == levels.end()) {
      std::cerr << "unknown log level " << log_level << "\n";
      return 2;
    }
    gbstore::set_log_level(it->second);
  }
  gbstore::set_log_tag(id);

  // Block before any thread starts so only sigwait sees these.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  signal(SIGPIPE, SIG_IGN);

  std::unique_ptr<gbstore::Node> node;
  try {
    gbstore::NodeOptions options;
    options.config = gbstore::load_config(config_path);
    options.config_path = config_path;
    options.id = id;
    options.debug_hooks = debug_hooks;
    node = gbstore::make_node(std::move(options));
    node->start();
  } catch (const std::exception& e) {
    std::cerr << "gbnode " << id << ": " << e.what() << "\n";
    return 1;
  }

  int sig = 0;
  sigwait(&signals, &sig);
  node->stop();
  return 0;
}
