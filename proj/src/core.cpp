#include "svio/core.hpp"

#include <cstring>

namespace svio::log {

static Level parse_level() {
  const char* env = std::getenv("SV_LOG");
  if (env == nullptr) return Level::Warn;
  if (std::strcmp(env, "error") == 0) return Level::Error;
  if (std::strcmp(env, "warn") == 0) return Level::Warn;
  if (std::strcmp(env, "info") == 0) return Level::Info;
  if (std::strcmp(env, "debug") == 0) return Level::Debug;
  return Level::Warn;
}

Level level() {
  static const Level lvl = parse_level();
  return lvl;
}

void write(Level lvl, const std::string& msg) {
  if (lvl > level()) return;
  static const char* names[] = {"E", "W", "I", "D"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

}  // namespace svio::log
