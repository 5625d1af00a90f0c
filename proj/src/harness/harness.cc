#include "gbstore/harness/harness.h"

#include <fcntl.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include <cerrno>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include "gbstore/util/log.h"
#include "gbstore/util/net.h"

namespace gbstore {
namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << content;
    if (!out) throw LaunchError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace

ClusterConfig make_local_config(size_t proxies, size_t targets,
                                const std::filesystem::path& root, Tuning tuning) {
  std::set<uint16_t> used;
  auto fresh_port = [&used] {
    for (;;) {
      uint16_t p = pick_free_port();
      if (used.insert(p).second) return p;
    }
  };
  ClusterConfig c;
  c.name = "local";
  c.tuning = tuning;
  for (size_t i = 0; i < proxies; ++i) {
    c.proxies.push_back({"p" + std::to_string(i),
                         "127.0.0.1:" + std::to_string(fresh_port()), "", ""});
  }
  for (size_t i = 0; i < targets; ++i) {
    std::string id = "t" + std::to_string(i);
    c.targets.push_back({id, "127.0.0.1:" + std::to_string(fresh_port()),
                         "127.0.0.1:" + std::to_string(fresh_port()),
                         (root / id).string()});
  }
  return c;
}

pid_t spawn_node(const SpawnOptions& options, const NodeId& id) {
  std::vector<std::string> args = {options.node_binary.string(), "--config",
                                   options.config_path.string(), "--id", id};
  if (options.debug_hooks) args.push_back("--debug-hooks");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  std::string log = options.log_path.string();
  pid_t parent = ::getpid();

  pid_t pid = ::fork();
  if (pid < 0) throw LaunchError("fork failed");
  if (pid == 0) {
    if (options.tie_to_parent) {
      ::prctl(PR_SET_PDEATHSIG, SIGKILL);
      if (::getppid() != parent) ::_exit(127);
    } else {
      ::setsid();
    }
    int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd >= 0) {
      ::dup2(fd, STDOUT_FILENO);
      ::dup2(fd, STDERR_FILENO);
      ::close(fd);
    }
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }
  return pid;
}

bool wait_healthy(const std::string& endpoint, std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  httplib::Client cli("http://" + endpoint);
  cli.set_connection_timeout(std::chrono::milliseconds(200));
  cli.set_read_timeout(std::chrono::seconds(1));
  while (std::chrono::steady_clock::now() < deadline) {
    auto res = cli.Get("/health");
    if (res && res->status == 200) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  return false;
}

bool process_alive(pid_t pid) {
  if (pid <= 0) return false;
  int status = 0;
  pid_t r = ::waitpid(pid, &status, WNOHANG);
  if (r == pid) return false;
  return ::kill(pid, 0) == 0;
}

void stop_process(pid_t pid, std::chrono::milliseconds grace) {
  if (pid <= 0) return;
  ::kill(pid, SIGTERM);
  auto deadline = std::chrono::steady_clock::now() + grace;
  while (std::chrono::steady_clock::now() < deadline) {
    int status = 0;
    pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) return;
    if (r < 0 && errno == ECHILD && ::kill(pid, 0) != 0) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ::kill(pid, SIGKILL);
  ::waitpid(pid, nullptr, 0);
}

ClusterHandle::ClusterHandle(ClusterConfig config, LaunchOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  std::filesystem::create_directories(options_.work_dir);
  config_path_ = options_.work_dir / "cluster.toml";
  write_file_atomic(config_path_, render_config(config_));
}

std::unique_ptr<ClusterHandle> ClusterHandle::launch(ClusterConfig config,
                                                     LaunchOptions options) {
  if (!std::filesystem::exists(options.node_binary)) {
    throw LaunchError("node binary not found: " + options.node_binary.string());
  }
  std::unique_ptr<ClusterHandle> h(new ClusterHandle(std::move(config), std::move(options)));
  std::lock_guard lock(h->mu_);
  for (const auto& t : h->config_.targets) h->start_node(t.id);
  for (const auto& p : h->config_.proxies) h->start_node(p.id);
  return h;
}

ClusterHandle::~ClusterHandle() { teardown(); }

void ClusterHandle::start_node(const NodeId& id) {
  const NodeConfig* n = config_.find(id);
  if (!n) throw LaunchError("unknown node " + id);
  SpawnOptions so;
  so.node_binary = options_.node_binary;
  so.config_path = config_path_;
  so.log_path = options_.work_dir / (id + ".log");
  so.debug_hooks = options_.debug_hooks;
  pid_t pid = spawn_node(so, id);
  pids_[id] = pid;
  if (!wait_healthy(n->listen, options_.startup_timeout)) {
    std::string log = read_file(so.log_path);
    stop_process(pid, std::chrono::milliseconds(500));
    pids_.erase(id);
    throw LaunchError("node " + id + " did not become healthy on " + n->listen +
                      "\n--- log ---\n" + log);
  }
}

void ClusterHandle::kill(const NodeId& id) {
  std::lock_guard lock(mu_);
  auto it = pids_.find(id);
  if (it == pids_.end()) return;
  ::kill(it->second, SIGKILL);
  ::waitpid(it->second, nullptr, 0);
  pids_.erase(it);
}

void ClusterHandle::restart(const NodeId& id) {
  std::lock_guard lock(mu_);
  if (auto it = pids_.find(id); it != pids_.end()) {
    stop_process(it->second, std::chrono::seconds(5));
    pids_.erase(it);
  }
  start_node(id);
}

void ClusterHandle::teardown() {
  std::lock_guard lock(mu_);
  if (torn_down_) return;
  torn_down_ = true;
  for (auto& [id, pid] : pids_) ::kill(pid, SIGTERM);
  for (auto& [id, pid] : pids_) stop_process(pid, std::chrono::seconds(5));
  pids_.clear();
  if (!options_.keep) {
    std::error_code ec;
    for (const auto& t : config_.targets) std::filesystem::remove_all(t.store_root, ec);
    std::filesystem::remove_all(options_.work_dir, ec);
  }
}

void ClusterHandle::rewrite_config(const ClusterConfig& config) {
  std::lock_guard lock(mu_);
  config_ = config;
  write_file_atomic(config_path_, render_config(config_));
  for (const auto& [id, pid] : pids_) {
    const NodeConfig* n = config_.find(id);
    if (!n) continue;
    httplib::Client cli("http://" + n->listen);
    cli.set_connection_timeout(std::chrono::seconds(2));
    auto res = cli.Post("/v1/cluster/reload");
    if (!res || res->status != 200) {
      GB_LOG(kWarning) << "reload failed on " << id;
    }
  }
}

std::string ClusterHandle::gateway_url() const {
  return "http://" + config_.proxies.front().listen;
}

std::string ClusterHandle::endpoint(const NodeId& id) const {
  const NodeConfig* n = config_.find(id);
  return n ? n->listen : "";
}

bool ClusterHandle::alive(const NodeId& id) const {
  std::lock_guard lock(mu_);
  auto it = pids_.find(id);
  return it != pids_.end() && process_alive(it->second);
}

std::string ClusterHandle::logs(const NodeId& id) const {
  return read_file(options_.work_dir / (id + ".log"));
}

}  // namespace gbstore
