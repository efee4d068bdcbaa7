#include "rlcf/core/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace rlcf {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Info};
std::mutex g_mu;
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log(LogLevel level, std::string_view msg) {
  if (level < g_level.load()) return;
  static constexpr const char* kTags[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(g_mu);
  std::cerr << '[' << kTags[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace rlcf
