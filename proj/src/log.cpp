#include "imgsearch/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace imgsearch {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warn};
std::mutex g_mutex;
}  // namespace

void set_log_level(LogLevel level) noexcept { g_level = level; }
LogLevel log_level() noexcept { return g_level; }

void log_message(LogLevel level, std::string_view message) {
    if (level < g_level.load()) return;
    static constexpr const char* names[] = {"debug", "info", "warn", "error"};
    std::lock_guard lock(g_mutex);
    std::fprintf(stderr, "[%s] %.*s\n", names[static_cast<int>(level)], static_cast<int>(message.size()),
                 message.data());
}

}  // namespace imgsearch
