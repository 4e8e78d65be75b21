// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "marlin/common.hpp"

namespace marlin {

// Content-addressed hash of a config document: key order is canonicalized
// (sorted) before hashing so construction order never matters.
inline std::string config_hash(const nlohmann::ordered_json& config) {
    const nlohmann::json sorted = config;  // map-backed json sorts keys
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(sorted.dump())));
    return buf;
}

// One machine-readable record per CLI run: enough to re-run the command
// bit-identically (full config + seed) plus the metrics and artifact paths.
struct RunReport {
    std::string command;
    nlohmann::ordered_json config;
    std::uint64_t seed = 0;
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    std::vector<std::string> artifacts;
    double wall_clock_sec = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["command"] = command;
        j["config_hash"] = config_hash(config);
        j["seed"] = seed;
        j["config"] = config;
        j["metrics"] = metrics;
        j["artifacts"] = artifacts;
        j["wall_clock_sec"] = wall_clock_sec;
        return j;
    }
};

inline void write_report(const RunReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "report.json", std::ios::trunc);
    require(bool(os), ErrorKind::io, "cannot write report.json in " + dir.string());
    os << report.to_json().dump(2) << "\n";
    require(bool(os), ErrorKind::io, "short write: report.json");
}

class WallClock {
public:
    WallClock() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace marlin
