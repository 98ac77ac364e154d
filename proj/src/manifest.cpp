#include "stabds/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "stabds/csv.hpp"
#include "stabds/errors.hpp"

namespace stabds {

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cli", "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a64_hex(buf.str());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::add_input(const std::string& path) { inputs.emplace_back(path, file_digest(path)); }

void RunManifest::add_output(const std::string& path, const std::string& contents) {
    outputs.emplace_back(path, fnv1a64_hex(contents));
}

nlohmann::ordered_json RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["config_digest"] = fnv1a64_hex(config.dump());
    j["seed"] = has_seed ? nlohmann::ordered_json(seed) : nlohmann::ordered_json(nullptr);
    auto list = [](const std::vector<std::pair<std::string, std::string>>& items) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& [path, digest] : items) arr.push_back({{"path", path}, {"fnv1a64", digest}});
        return arr;
    };
    j["inputs"] = list(inputs);
    j["outputs"] = list(outputs);
    j["version"] = version;
    j["timestamp"] = timestamp.empty() ? utc_timestamp() : timestamp;
    return j;
}

void write_manifest(const RunManifest& manifest, const std::string& primary_output) {
    csv::write_file(primary_output + ".manifest.json", manifest.to_json().dump(2) + "\n");
}

}  // namespace stabds
