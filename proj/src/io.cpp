#include "incgate/io.hpp"

#include <iostream>

namespace incgate {

LogLevel& log_level() {
    static LogLevel level = LogLevel::warn;
    return level;
}

LogLevel log_level_from_string(std::string_view name) {
    if (name == "error") return LogLevel::error;
    if (name == "warn") return LogLevel::warn;
    if (name == "info") return LogLevel::info;
    if (name == "debug") return LogLevel::debug;
    throw ParseError("unknown log level '" + std::string(name) + "'");
}

void log(LogLevel level, const std::string& message) {
    if (level > log_level()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << "\n";
}

}  // namespace incgate
