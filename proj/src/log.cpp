#include "hybridgait/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace hybridgait::log {

static Level parse_env() {
  const char* v = std::getenv("HYBRIDGAIT_LOG");
  if (v == nullptr) return Level::kWarn;
  if (std::strcmp(v, "error") == 0) return Level::kError;
  if (std::strcmp(v, "warn") == 0) return Level::kWarn;
  if (std::strcmp(v, "info") == 0) return Level::kInfo;
  if (std::strcmp(v, "debug") == 0) return Level::kDebug;
  std::fprintf(stderr, "[hybridgait] unknown HYBRIDGAIT_LOG value '%s', using 'warn'\n", v);
  return Level::kWarn;
}

Level threshold() {
  static const Level level = parse_env();
  return level;
}

void write(Level level, const std::string& message) {
  if (level > threshold()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[hybridgait %s] %s\n", names[static_cast<int>(level)], message.c_str());
}

}  // namespace hybridgait::log
