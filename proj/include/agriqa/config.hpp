#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agriqa/corpus.hpp"
#include "agriqa/modelgw.hpp"

namespace agriqa {

/// Flat `[section]` / `key = value` configuration. Values from the file can
/// be overridden with set() (command-line flags), and those in turn by
/// apply_env().
class Config {
public:
    Config() = default;
    static Config load(const std::filesystem::path& path);
    static Config parse(std::string_view text);

    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::map<std::string, std::string> section(const std::string& name) const;

    void set(const std::string& section, const std::string& key, std::string value);

    /// AGRIQA_GEN_URL, AGRIQA_GEN_TOKEN, AGRIQA_REPHRASE_URL,
    /// AGRIQA_REPHRASE_TOKEN, AGRIQA_ADDR, AGRIQA_DATA_DIR.
    void apply_env();

    /// Hex SHA-256 of the bytes the config was loaded from.
    const std::string& hash() const { return hash_; }
    const std::optional<std::filesystem::path>& source() const { return source_; }

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
    std::string hash_ = sha256_hex("");
    std::optional<std::filesystem::path> source_;

public:
    static std::string sha256_hex(std::string_view bytes);
};

std::filesystem::path data_dir(const Config& c);
std::filesystem::path rules_dir(const Config& c);
std::filesystem::path familiar_words_path(const Config& c);
corpus::SchemaMap schema_map(const Config& c);
corpus::StratumKey stratum_key(const Config& c);
/// section is "generate" or "rephrase"; the token is read only from the
/// environment-backed entry set by apply_env().
modelgw::ProviderConfig provider_config(const Config& c, const std::string& section);

struct RunManifest {
    std::string subcommand;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string config_hash;
    std::optional<std::uint64_t> seed;
    std::string tool_version;
    std::chrono::system_clock::time_point started_at;
    std::chrono::system_clock::time_point finished_at;

    std::string to_json() const;
};

void write_manifest(const RunManifest& m, const std::filesystem::path& path);
std::string iso8601_utc(std::chrono::system_clock::time_point t);

const char* version();

}  // namespace agriqa
