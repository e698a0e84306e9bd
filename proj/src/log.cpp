#include "msra/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace msra::log {

Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("MSRA_LOG_LEVEL");
    const std::string value = env ? env : "";
    if (value == "error") return Level::error;
    if (value == "info") return Level::info;
    if (value == "debug") return Level::debug;
    return Level::warn;
  }();
  return level;
}

bool enabled(Level level) { return static_cast<int>(level) <= static_cast<int>(threshold()); }

void write(Level level, const std::string& message) {
  if (!enabled(level)) return;
  static std::mutex mutex;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mutex);
  std::cerr << "[msra " << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace msra::log
