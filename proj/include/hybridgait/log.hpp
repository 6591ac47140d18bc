#pragma once

#include <string>

namespace hybridgait::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Threshold parsed once from the HYBRIDGAIT_LOG environment variable
// ("error", "warn", "info", "debug"); defaults to "warn".
Level threshold();

void write(Level level, const std::string& message);

inline void error(const std::string& m) { write(Level::kError, m); }
inline void warn(const std::string& m) { write(Level::kWarn, m); }
inline void info(const std::string& m) { write(Level::kInfo, m); }
inline void debug(const std::string& m) { write(Level::kDebug, m); }

}  // namespace hybridgait::log
