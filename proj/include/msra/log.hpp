#pragma once

#include <string>

namespace msra::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Threshold from the MSRA_LOG_LEVEL environment variable (error, warn, info,
/// debug); defaults to warn.
Level threshold();
bool enabled(Level level);
/// Writes one line to stderr when the level passes the threshold.
void write(Level level, const std::string& message);

}  // namespace msra::log
