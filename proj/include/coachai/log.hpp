#pragma once

#include <string_view>

namespace coachai::log {

enum class Level { debug, info, warn, error, off };

void set_level(Level level);
Level level();

// Writes "<level>: <message>" to stderr when `at` passes the threshold.
void write(Level at, std::string_view message);

inline void warn(std::string_view message) { write(Level::warn, message); }
inline void info(std::string_view message) { write(Level::info, message); }
inline void error(std::string_view message) { write(Level::error, message); }

}  // namespace coachai::log
