#include "coachai/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace coachai::log {

namespace {

std::atomic<Level> threshold{Level::warn};
std::mutex out_mutex;

const char* label(Level l) {
    switch (l) {
    case Level::debug:
        return "debug";
    case Level::info:
        return "info";
    case Level::warn:
        return "warn";
    case Level::error:
        return "error";
    default:
        return "";
    }
}

}  // namespace

void set_level(Level l) { threshold = l; }
Level level() { return threshold; }

void write(Level at, std::string_view message) {
    if (at < threshold.load() || at == Level::off)
        return;
    std::lock_guard lock(out_mutex);
    std::cerr << label(at) << ": " << message << '\n';
}

}  // namespace coachai::log
