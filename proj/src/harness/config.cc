#include "gbstore/harness/config.h"

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <variant>

#include "gbstore/util/net.h"

namespace gbstore {
namespace {

using Value = std::variant<std::string, int64_t, double, bool>;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

bool is_bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
      return false;
    }
  }
  return true;
}

// Parses one value and returns it; `rest` receives what follows it.
Value parse_value(std::string_view s, int line, std::string_view& rest) {
  if (s.empty()) throw ConfigError(line, "missing value");
  if (s.front() == '"') {
    std::string out;
    size_t i = 1;
    for (; i < s.size() && s[i] != '"'; ++i) {
      if (s[i] != '\\') {
        out += s[i];
        continue;
      }
      if (++i == s.size()) break;
      switch (s[i]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: throw ConfigError(line, "unsupported escape in string");
      }
    }
    if (i >= s.size()) throw ConfigError(line, "unterminated string");
    rest = s.substr(i + 1);
    return out;
  }
  size_t end = s.find_first_of(" \t#");
  std::string_view token = s.substr(0, end);
  rest = end == std::string_view::npos ? std::string_view{} : s.substr(end);
  if (token == "true") return true;
  if (token == "false") return false;
  int64_t iv = 0;
  auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), iv);
  if (ec == std::errc() && p == token.data() + token.size()) return iv;
  double dv = 0;
  auto [q, ec2] = std::from_chars(token.data(), token.data() + token.size(), dv);
  if (ec2 == std::errc() && q == token.data() + token.size()) return dv;
  throw ConfigError(line, "cannot parse value '" + std::string(token) + "'");
}

struct Table {
  int line = 0;
  std::map<std::string, std::pair<Value, int>> values;
};

std::string get_string(const Table& t, const std::string& key, bool required,
                       const std::string& section) {
  auto it = t.values.find(key);
  if (it == t.values.end()) {
    if (required) throw ConfigError(t.line, section + " is missing '" + key + "'");
    return {};
  }
  if (auto* s = std::get_if<std::string>(&it->second.first)) return *s;
  throw ConfigError(it->second.second, "'" + key + "' must be a string");
}

void check_keys(const Table& t, const std::set<std::string>& allowed,
                const std::string& section) {
  for (const auto& [k, v] : t.values) {
    if (!allowed.count(k)) {
      throw ConfigError(v.second, "unknown key '" + k + "' in " + section);
    }
  }
}

void apply_tuning(const Table& t, Tuning& tuning) {
  std::map<std::string, int64_t*> ints = {
      {"rxwait_timeout_ms", &tuning.rxwait_timeout_ms},
      {"gfn_attempts", &tuning.gfn_attempts},
      {"max_soft_errors", &tuning.max_soft_errors},
      {"readahead_workers", &tuning.readahead_workers},
      {"idle_timeout_s", &tuning.idle_timeout_s},
      {"throttle_step_ms", &tuning.throttle_step_ms},
      {"max_conns_per_peer", &tuning.max_conns_per_peer},
      {"connect_timeout_ms", &tuning.connect_timeout_ms},
      {"activation_timeout_ms", &tuning.activation_timeout_ms},
      {"client_wait_timeout_s", &tuning.client_wait_timeout_s},
      {"max_body_bytes", &tuning.max_body_bytes},
      {"mem_budget_bytes", &tuning.mem_budget_bytes},
  };
  std::map<std::string, double*> doubles = {
      {"mem_critical", &tuning.mem_critical},
      {"busy_threshold", &tuning.busy_threshold},
  };
  for (const auto& [key, entry] : t.values) {
    const auto& [value, line] = entry;
    if (auto it = ints.find(key); it != ints.end()) {
      auto* v = std::get_if<int64_t>(&value);
      if (!v || *v < 0) {
        throw ConfigError(line, "'" + key + "' must be a non-negative integer");
      }
      *it->second = *v;
    } else if (auto dt = doubles.find(key); dt != doubles.end()) {
      double d;
      if (auto* f = std::get_if<double>(&value)) {
        d = *f;
      } else if (auto* i = std::get_if<int64_t>(&value)) {
        d = static_cast<double>(*i);
      } else {
        throw ConfigError(line, "'" + key + "' must be a number");
      }
      if (d < 0 || d > 1) throw ConfigError(line, "'" + key + "' must be in [0, 1]");
      *dt->second = d;
    } else {
      throw ConfigError(line, "unknown tuning key '" + key + "'");
    }
  }
}

std::string default_peer(const std::string& listen, int line) {
  auto hp = parse_host_port(listen);
  if (!hp) throw ConfigError(line, "bad listen address '" + listen + "'");
  if (hp->port > 65535 - 1000) {
    throw ConfigError(line, "listen port too high to derive a peer port");
  }
  return HostPort{hp->host, static_cast<uint16_t>(hp->port + 1000)}.str();
}

}  // namespace

const NodeConfig* ClusterConfig::find(const NodeId& id) const {
  for (const auto* list : {&proxies, &targets}) {
    for (const auto& n : *list) {
      if (n.id == id) return &n;
    }
  }
  return nullptr;
}

bool ClusterConfig::is_target(const NodeId& id) const {
  for (const auto& n : targets) {
    if (n.id == id) return true;
  }
  return false;
}

ClusterMap ClusterConfig::to_map(uint64_t version) const {
  std::vector<NodeInfo> t, p;
  for (const auto& n : targets) t.push_back({n.id, n.listen, NodeRole::kTarget, n.peer});
  for (const auto& n : proxies) p.push_back({n.id, n.listen, NodeRole::kProxy, ""});
  return ClusterMap(version, std::move(t), std::move(p));
}

ClusterConfig parse_config(std::string_view text,
                           const std::filesystem::path& base_dir) {
  std::optional<Table> cluster, tuning;
  std::vector<Table> proxies, targets;
  Table* current = nullptr;

  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    if (line.front() == '[') {
      bool array = line.size() > 1 && line[1] == '[';
      std::string_view close = array ? "]]" : "]";
      size_t end = line.find(close);
      if (end == std::string_view::npos) {
        throw ConfigError(line_no, "unterminated section header");
      }
      std::string_view after = trim(line.substr(end + close.size()));
      if (!after.empty() && after.front() != '#') {
        throw ConfigError(line_no, "trailing characters after section header");
      }
      std::string name(trim(line.substr(array ? 2 : 1, end - (array ? 2 : 1))));
      Table fresh;
      fresh.line = line_no;
      if (array && name == "proxy") {
        current = &proxies.emplace_back(fresh);
      } else if (array && name == "target") {
        current = &targets.emplace_back(fresh);
      } else if (!array && (name == "cluster" || name == "tuning")) {
        auto& slot = name == "cluster" ? cluster : tuning;
        if (slot) throw ConfigError(line_no, "duplicate [" + name + "] section");
        slot = fresh;
        current = &*slot;
      } else {
        throw ConfigError(line_no, "unknown section '" + name + "'");
      }
      continue;
    }

    size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected key = value");
    std::string key(trim(line.substr(0, eq)));
    if (!is_bare_key(key)) throw ConfigError(line_no, "bad key '" + key + "'");
    if (!current) throw ConfigError(line_no, "key '" + key + "' outside any section");
    std::string_view rest;
    Value v = parse_value(trim(line.substr(eq + 1)), line_no, rest);
    rest = trim(rest);
    if (!rest.empty() && rest.front() != '#') {
      throw ConfigError(line_no, "trailing characters after value");
    }
    if (!current->values.emplace(key, std::make_pair(std::move(v), line_no)).second) {
      throw ConfigError(line_no, "duplicate key '" + key + "'");
    }
  }

  if (!cluster) throw ConfigError(0, "missing [cluster] section");
  if (proxies.empty()) throw ConfigError(0, "missing [[proxy]] section");
  if (targets.empty()) throw ConfigError(0, "missing [[target]] section");

  ClusterConfig config;
  check_keys(*cluster, {"name"}, "[cluster]");
  config.name = get_string(*cluster, "name", true, "[cluster]");
  if (tuning) apply_tuning(*tuning, config.tuning);

  std::map<std::string, int> seen;
  std::map<std::string, int> seen_listen;
  auto add = [&](const Table& t, bool is_target) {
    std::string section = is_target ? "[[target]]" : "[[proxy]]";
    check_keys(t,
               is_target ? std::set<std::string>{"id", "listen", "peer", "store_root"}
                         : std::set<std::string>{"id", "listen"},
               section);
    NodeConfig n;
    n.id = get_string(t, "id", true, section);
    if (n.id.empty()) throw ConfigError(t.line, "empty node id");
    if (auto [it, fresh] = seen.emplace(n.id, t.line); !fresh) {
      throw ConfigError(t.line, "duplicate node id '" + n.id + "' (first defined at line " +
                                    std::to_string(it->second) + ")");
    }
    n.listen = get_string(t, "listen", true, section);
    if (!parse_host_port(n.listen)) {
      throw ConfigError(t.line, "bad listen address '" + n.listen + "'");
    }
    if (is_target) {
      n.peer = get_string(t, "peer", false, section);
      if (n.peer.empty()) n.peer = default_peer(n.listen, t.line);
      if (!parse_host_port(n.peer)) {
        throw ConfigError(t.line, "bad peer address '" + n.peer + "'");
      }
      std::filesystem::path root = get_string(t, "store_root", true, section);
      if (root.is_relative() && !base_dir.empty()) root = base_dir / root;
      n.store_root = root.string();
    }
    for (const std::string& addr : {n.listen, n.peer}) {
      if (addr.empty()) continue;
      if (auto [it, fresh] = seen_listen.emplace(addr, t.line); !fresh) {
        throw ConfigError(t.line, "address " + addr + " already used at line " +
                                      std::to_string(it->second));
      }
    }
    (is_target ? config.targets : config.proxies).push_back(std::move(n));
  };
  for (const auto& t : proxies) add(t, false);
  for (const auto& t : targets) add(t, true);
  return config;
}

ClusterConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string render_config(const ClusterConfig& config) {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  };
  std::ostringstream out;
  out << "[cluster]\nname = " << quote(config.name) << "\n";
  for (const auto& p : config.proxies) {
    out << "\n[[proxy]]\nid = " << quote(p.id) << "\nlisten = " << quote(p.listen)
        << "\n";
  }
  for (const auto& t : config.targets) {
    out << "\n[[target]]\nid = " << quote(t.id) << "\nlisten = " << quote(t.listen)
        << "\npeer = " << quote(t.peer) << "\nstore_root = " << quote(t.store_root)
        << "\n";
  }
  const Tuning& k = config.tuning;
  auto num = [](double d) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, end);
  };
  out << "\n[tuning]\n"
      << "rxwait_timeout_ms = " << k.rxwait_timeout_ms << "\n"
      << "gfn_attempts = " << k.gfn_attempts << "\n"
      << "max_soft_errors = " << k.max_soft_errors << "\n"
      << "readahead_workers = " << k.readahead_workers << "\n"
      << "idle_timeout_s = " << k.idle_timeout_s << "\n"
      << "mem_critical = " << num(k.mem_critical) << "\n"
      << "busy_threshold = " << num(k.busy_threshold) << "\n"
      << "throttle_step_ms = " << k.throttle_step_ms << "\n"
      << "max_conns_per_peer = " << k.max_conns_per_peer << "\n"
      << "connect_timeout_ms = " << k.connect_timeout_ms << "\n"
      << "activation_timeout_ms = " << k.activation_timeout_ms << "\n"
      << "client_wait_timeout_s = " << k.client_wait_timeout_s << "\n"
      << "max_body_bytes = " << k.max_body_bytes << "\n"
      << "mem_budget_bytes = " << k.mem_budget_bytes << "\n";
  return out.str();
}

}  // namespace gbstore
