#include "gbstore/util/log.h"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <mutex>

namespace gbstore {
namespace {

std::atomic<int> g_level{[] {
  const char* env = std::getenv("GBSTORE_LOG_LEVEL");
  if (env == nullptr) return static_cast<int>(LogLevel::kWarning);
  std::string v(env);
  if (v == "debug") return 0;
  if (v == "info") return 1;
  if (v == "error") return 3;
  return 2;
}()};
std::mutex g_mu;
std::string g_tag = "gbstore";

}  // namespace

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }

void set_log_tag(std::string tag) {
  std::lock_guard lock(g_mu);
  g_tag = std::move(tag);
}

bool log_enabled(LogLevel level) { return static_cast<int>(level) >= g_level; }

namespace internal {

LogLine::~LogLine() {
  static constexpr char kLetters[] = {'D', 'I', 'W', 'E'};
  auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
                 .count();
  std::lock_guard lock(g_mu);
  std::fprintf(stderr, "%c %lld.%03lld [%s] %s\n",
               kLetters[static_cast<int>(level_)],
               static_cast<long long>(now / 1000),
               static_cast<long long>(now % 1000), g_tag.c_str(),
               out_.str().c_str());
}

}  // namespace internal
}  // namespace gbstore
