// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace marlin {

enum class ErrorKind {
    invalid_argument,  // bad parameters, shape mismatches
    io,                // filesystem failures
    format,            // malformed files, out-of-range payloads
    numeric,           // non-finite values where finite ones are required
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    static Error invalid(const std::string& msg) { return {ErrorKind::invalid_argument, msg}; }
    static Error io(const std::string& msg) { return {ErrorKind::io, msg}; }
    static Error format(const std::string& msg) { return {ErrorKind::format, msg}; }
    static Error numeric(const std::string& msg) { return {ErrorKind::numeric, msg}; }

private:
    ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) throw Error(kind, msg);
}

inline void require_arg(bool cond, const std::string& msg) {
    require(cond, ErrorKind::invalid_argument, msg);
}

// FNV-1a, used for content-addressed config hashes and seed derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

// Progress logging is controlled by the MARLIN_VERBOSE environment variable
// only ("0"/unset silences it).
inline bool verbose_logging() {
    static const bool enabled = [] {
        const char* v = std::getenv("MARLIN_VERBOSE");
        return v != nullptr && *v != '\0' && std::string(v) != "0";
    }();
    return enabled;
}

}  // namespace marlin
