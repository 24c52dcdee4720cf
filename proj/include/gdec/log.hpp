#pragma once

// Minimal stderr logger; verbosity from GDEC_LOG={error|info|debug}.

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace gdec::log {

enum class Level { error = 0, info = 1, debug = 2 };

inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("GDEC_LOG");
    const std::string_view v = env ? env : "";
    if (v == "debug") return Level::debug;
    if (v == "error") return Level::error;
    return Level::info;
  }();
  return lvl;
}

inline void write(Level l, std::string_view tag, const std::string& msg) {
  if (static_cast<int>(l) <= static_cast<int>(level())) std::cerr << "[gdec " << tag << "] " << msg << '\n';
}

inline void error(const std::string& m) { write(Level::error, "error", m); }
inline void info(const std::string& m) { write(Level::info, "info", m); }
inline void debug(const std::string& m) { write(Level::debug, "debug", m); }

}  // namespace gdec::log
