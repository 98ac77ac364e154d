#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace stabds {

inline constexpr const char* kVersion = "0.1.0";

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a64_hex(std::string_view bytes);
/// Digest of a file's bytes; ConfigError when it cannot be read.
std::string file_digest(const std::string& path);

/// Provenance record written next to every output. Two runs whose
/// manifests agree apart from the timestamp produce identical outputs.
struct RunManifest {
    std::string command;
    nlohmann::ordered_json config;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::vector<std::pair<std::string, std::string>> inputs;   // path, digest
    std::vector<std::pair<std::string, std::string>> outputs;  // path, digest
    std::string version = kVersion;
    std::string timestamp;  // UTC, ISO 8601

    void add_input(const std::string& path);
    void add_output(const std::string& path, const std::string& contents);
    nlohmann::ordered_json to_json() const;
};

std::string utc_timestamp();

/// Writes `<primary>.manifest.json`.
void write_manifest(const RunManifest& manifest, const std::string& primary_output);

}  // namespace stabds
