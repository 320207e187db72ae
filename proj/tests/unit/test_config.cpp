#include <doctest.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "agriqa/config.hpp"
#include "agriqa/error.hpp"
#include "support.hpp"

using namespace agriqa;

namespace {

struct EnvVar {
    std::string name;
    EnvVar(std::string n, const char* v) : name(std::move(n)) { setenv(name.c_str(), v, 1); }
    ~EnvVar() { unsetenv(name.c_str()); }
};

}  // namespace

TEST_CASE("sections and typed getters") {
    auto c = Config::parse("[generate]\nurl = http://x/v1\ntimeout_ms = 250\nmax_retries=1\n"
                           "[service]\nrate_limit = 2.5\n[rephrase]\nenabled = off\n");
    CHECK(c.get("generate", "url") == "http://x/v1");
    CHECK(c.get_int("generate", "timeout_ms", 0) == 250);
    CHECK(c.get_double("service", "rate_limit", 0) == 2.5);
    CHECK_FALSE(c.get_bool("rephrase", "enabled", true));
    CHECK(c.get_int("generate", "nothing", 7) == 7);
    CHECK_FALSE(c.get("nope", "x"));
    CHECK_THROWS_AS(Config::parse("[a]\nn = 1x\n").get_int("a", "n", 0), Error);
    CHECK_THROWS_AS(Config::parse("[a]\nb = maybe\n").get_bool("a", "b", false), Error);
    CHECK_THROWS_AS(Config::parse("[a]\nd = 1.5.2\n").get_double("a", "d", 0), Error);

    auto p = provider_config(c, "generate");
    CHECK(p.base_url == "http://x/v1");
    CHECK(p.timeout.count() == 250);
    CHECK(p.max_retries == 1);
    CHECK(p.model_name == "flan-t5-base");
    CHECK_FALSE(p.auth_token);
}

TEST_CASE("malformed configs") {
    CHECK_THROWS_AS(Config::parse("[broken\n"), Error);
    CHECK_THROWS_AS(Config::parse("loose = 1\n"), Error);
    CHECK_THROWS_AS(Config::load("/nonexistent/agriqa.ini"), Error);
}

TEST_CASE("secrets are refused in files") {
    try {
        Config::parse("[generate]\nauth_token = abc\n");
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Validation);
    }
    CHECK_THROWS_AS(Config::parse("[rephrase]\ntoken = abc\n"), Error);
}

TEST_CASE("environment overrides flags which override the file") {
    auto c = Config::parse("[generate]\nurl = http://file\n[rephrase]\nurl = http://file-r\n");
    c.set("generate", "url", "http://flag");
    c.set("rephrase", "url", "http://flag-r");
    EnvVar url("AGRIQA_GEN_URL", "http://env");
    EnvVar token("AGRIQA_GEN_TOKEN", "s3cret");
    EnvVar empty("AGRIQA_REPHRASE_URL", "");
    c.apply_env();
    CHECK(c.get("generate", "url") == "http://env");
    CHECK(c.get("rephrase", "url") == "http://flag-r");
    CHECK(provider_config(c, "generate").auth_token == "s3cret");
}

TEST_CASE("hash covers the loaded bytes") {
    testsupport::TempDir dir;
    testsupport::write_text(dir / "a.ini", "[x]\ny = 1\n");
    auto a = Config::load(dir / "a.ini");
    CHECK(a.hash() == Config::load(dir / "a.ini").hash());
    CHECK(a.hash().size() == 64);
    CHECK(a.hash() != Config::parse("[x]\ny = 2\n").hash());
    CHECK(Config::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(Config().hash() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(a.source() == dir / "a.ini");
}

TEST_CASE("paths and corpus settings") {
    auto c = Config::parse("[paths]\ndata_dir = /d\n[corpus]\nid = Ref\nquery_text = Q\nstratify = sector,season\n");
    CHECK(rules_dir(c) == "/d/rules");
    CHECK(familiar_words_path(c) == "/d/dale_chall_familiar.txt");
    auto s = schema_map(c);
    CHECK(s.id == "Ref");
    CHECK(s.query_text == "Q");
    CHECK(stratum_key(c).describe().find("sector") != std::string::npos);
    CHECK_THROWS_AS(schema_map(Config::parse("[corpus]\nbogus = x\n")), Error);
}

TEST_CASE("run manifest") {
    testsupport::TempDir dir;
    RunManifest m;
    m.subcommand = "split";
    m.inputs = {"in.jsonl"};
    m.outputs = {"train.jsonl", "test.jsonl"};
    m.config_hash = Config().hash();
    m.seed = 42;
    m.tool_version = version();
    m.started_at = std::chrono::system_clock::time_point(std::chrono::seconds(0));
    m.finished_at = m.started_at + std::chrono::seconds(61);
    write_manifest(m, dir / "manifest.json");
    auto j = nlohmann::json::parse(testsupport::read_text(dir / "manifest.json"));
    CHECK(j["subcommand"] == "split");
    CHECK(j["seed"] == 42);
    CHECK(j["outputs"].size() == 2);
    CHECK(iso8601_utc(m.finished_at) == "1970-01-01T00:01:01Z");
    m.seed.reset();
    CHECK(nlohmann::json::parse(m.to_json())["seed"].is_null());
}
