#include "agriqa/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "agriqa/error.hpp"
#include "agriqa/text.hpp"

#ifndef AGRIQA_DEFAULT_DATA_DIR
#define AGRIQA_DEFAULT_DATA_DIR "data"
#endif
#ifndef AGRIQA_VERSION
#define AGRIQA_VERSION "0.0.0"
#endif

namespace agriqa {

namespace fs = std::filesystem;

const char* version() { return AGRIQA_VERSION; }

std::string Config::sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::Internal, "SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

Config Config::parse(std::string_view text) {
    boost::property_tree::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(ErrorCode::Parse, std::string("config: ") + e.what());
    }
    Config c;
    for (const auto& [section, children] : tree) {
        if (children.empty()) throw Error(ErrorCode::Parse, "config key '" + section + "' outside a [section]");
        for (const auto& [key, value] : children) {
            if (key == "auth_token" || key == "token")
                throw Error(ErrorCode::Validation,
                            "config [" + section + "] " + key + ": secrets are read from environment variables only");
            c.values_[section][key] = value.get_value<std::string>();
        }
    }
    c.hash_ = sha256_hex(text);
    return c;
}

Config Config::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto c = parse(ss.str());
    c.source_ = path;
    return c;
}

std::optional<std::string> Config::get(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    if (s == values_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
}

std::string Config::get_or(const std::string& section, const std::string& key, const std::string& fallback) const {
    return get(section, key).value_or(fallback);
}

long long Config::get_int(const std::string& section, const std::string& key, long long fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    long long out = 0;
    auto t = text::trim(*v);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc{} || p != t.data() + t.size())
        throw Error(ErrorCode::Parse, "config [" + section + "] " + key + ": not an integer: " + *v);
    return out;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw Error(ErrorCode::Parse, "config [" + section + "] " + key + ": not a number: " + *v);
    }
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    auto t = text::to_lower(text::trim(*v));
    if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
    if (t == "false" || t == "no" || t == "off" || t == "0") return false;
    throw Error(ErrorCode::Parse, "config [" + section + "] " + key + ": not a boolean: " + *v);
}

std::map<std::string, std::string> Config::section(const std::string& name) const {
    auto s = values_.find(name);
    return s == values_.end() ? std::map<std::string, std::string>{} : s->second;
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
    values_[section][key] = std::move(value);
}

void Config::apply_env() {
    struct Binding {
        const char* env;
        const char* section;
        const char* key;
    };
    static constexpr Binding bindings[] = {
        {"AGRIQA_GEN_URL", "generate", "url"},
        {"AGRIQA_GEN_TOKEN", "generate", "auth_token"},
        {"AGRIQA_REPHRASE_URL", "rephrase", "url"},
        {"AGRIQA_REPHRASE_TOKEN", "rephrase", "auth_token"},
        {"AGRIQA_ADDR", "service", "addr"},
        {"AGRIQA_DATA_DIR", "paths", "data_dir"},
    };
    for (const auto& b : bindings) {
        if (const char* v = std::getenv(b.env); v && *v) set(b.section, b.key, v);
    }
}

fs::path data_dir(const Config& c) { return c.get_or("paths", "data_dir", AGRIQA_DEFAULT_DATA_DIR); }

fs::path rules_dir(const Config& c) {
    if (auto v = c.get("normalize", "rules_dir")) return *v;
    return data_dir(c) / "rules";
}

fs::path familiar_words_path(const Config& c) {
    if (auto v = c.get("metrics", "familiar_words")) return *v;
    return data_dir(c) / "dale_chall_familiar.txt";
}

corpus::SchemaMap schema_map(const Config& c) {
    auto entries = c.section("corpus");
    entries.erase("stratify");
    return corpus::SchemaMap::from_entries(entries);
}

corpus::StratumKey stratum_key(const Config& c) {
    if (auto v = c.get("corpus", "stratify")) return corpus::StratumKey::parse(*v);
    return {};
}

modelgw::ProviderConfig provider_config(const Config& c, const std::string& section) {
    modelgw::ProviderConfig p;
    p.base_url = c.get_or(section, "url", "");
    p.model_name = c.get_or(section, "model", section == "generate" ? "flan-t5-base" : "gemini-flash");
    p.timeout = modelgw::Millis(c.get_int(section, "timeout_ms", 10000));
    p.max_retries = static_cast<int>(c.get_int(section, "max_retries", 2));
    p.auth_token = c.get(section, "auth_token");
    return p;
}

// ---------------------------------------------------------------------------

std::string iso8601_utc(std::chrono::system_clock::time_point t) {
    const auto secs = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["subcommand"] = subcommand;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["config_hash"] = config_hash;
    j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
    j["tool_version"] = tool_version;
    j["started_at"] = iso8601_utc(started_at);
    j["finished_at"] = iso8601_utc(finished_at);
    return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& m, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write manifest " + path.string());
    out << m.to_json();
}

}  // namespace agriqa
