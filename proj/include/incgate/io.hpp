#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "incgate/errors.hpp"

namespace incgate {

using json = nlohmann::json;

// FNV-1a 64-bit; used as a content digest for model files and dataset inputs.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(data);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ParseError("write failed: " + path);
}

inline json parse_json_line(const std::string& line, std::size_t line_no) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
        throw ParseError("invalid JSON on line " + std::to_string(line_no));
    return j;
}

// Every newline-delimited stream starts with a {"format":...,"version":...}
// header record.
inline json read_stream_header(std::istream& in, std::string_view expected_format) {
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("empty stream, expected header record for format '" +
                         std::string(expected_format) + "'");
    json header = parse_json_line(line, 1);
    if (!header.is_object() || !header.contains("format") || !header.contains("version"))
        throw ParseError("first record is not a format header");
    if (header.at("format").get<std::string>() != expected_format)
        throw ParseError("unexpected stream format '" +
                         header.at("format").get<std::string>() + "', expected '" +
                         std::string(expected_format) + "'");
    if (header.at("version").get<int>() != 1)
        throw ParseError("unsupported version for format '" + std::string(expected_format) + "'");
    return header;
}

inline json make_stream_header(std::string_view format) {
    return json{{"format", std::string(format)}, {"version", 1}};
}

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel& log_level();
LogLevel log_level_from_string(std::string_view name);
void log(LogLevel level, const std::string& message);

inline void log_info(const std::string& message) { log(LogLevel::info, message); }
inline void log_warn(const std::string& message) { log(LogLevel::warn, message); }
inline void log_debug(const std::string& message) { log(LogLevel::debug, message); }

}  // namespace incgate
