#ifndef GBSTORE_UTIL_LOG_H_
#define GBSTORE_UTIL_LOG_H_

#include <sstream>
#include <string>

namespace gbstore {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3 };

void set_log_level(LogLevel level);
void set_log_tag(std::string tag);
bool log_enabled(LogLevel level);

namespace internal {

class LogLine {
 public:
  explicit LogLine(LogLevel level) : level_(level) {}
  ~LogLine();
  template <typename T>
  LogLine& operator<<(const T& v) {
    out_ << v;
    return *this;
  }

 private:
  LogLevel level_;
  std::ostringstream out_;
};

}  // namespace internal
}  // namespace gbstore

#define GB_LOG(level)                                   \
  if (!::gbstore::log_enabled(::gbstore::LogLevel::level)) \
    ;                                                   \
  else                                                  \
    ::gbstore::internal::LogLine(::gbstore::LogLevel::level)

#endif  // GBSTORE_UTIL_LOG_H_
