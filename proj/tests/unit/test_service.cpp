#include <doctest.h>

#include <algorithm>
#include <future>
#include <set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "agriqa/service.hpp"
#include "support.hpp"

using namespace agriqa;
using namespace agriqa::service;
using nlohmann::json;

namespace {

std::shared_ptr<const normalize::NormalizationRuleSet> rules() {
    static auto r = std::make_shared<const normalize::NormalizationRuleSet>(
        normalize::NormalizationRuleSet::load(testsupport::data_dir() / "rules"));
    return r;
}

std::shared_ptr<modelgw::FixtureProvider> gen_fixtures() {
    return modelgw::FixtureProvider::from_file(testsupport::data_dir() / "fixtures" / "generate.jsonl", "gen");
}

std::shared_ptr<modelgw::FixtureProvider> reph_fixtures() {
    return modelgw::FixtureProvider::from_file(testsupport::data_dir() / "fixtures" / "rephrase.jsonl", "reph");
}

std::shared_ptr<const modelgw::AnswerPipeline> fixture_pipeline() {
    return std::make_shared<const modelgw::AnswerPipeline>(rules(), gen_fixtures(), reph_fixtures());
}

ServiceConfig unlimited() {
    ServiceConfig c;
    c.rate_limit = 0;
    c.probe_timeout = std::chrono::milliseconds(200);
    return c;
}

QueryLogEntry sample_entry(const std::string& id) {
    QueryLogEntry e;
    e.request.query = "q " + id;
    e.request.metadata = QueryMetadata{"paddy", std::nullopt, "Kharif"};
    e.response.id = id;
    e.response.normalized_query = "q";
    e.response.raw_answer = "a";
    e.response.rephrase_status = modelgw::RephraseStatus::Ok;
    e.response.rephrased_answer = "A.";
    e.response.generate_ms = 3;
    e.response.rephrase_ms = 4;
    e.generate_model = "gen";
    e.rephrase_model = "reph";
    return e;
}

}  // namespace

TEST_CASE("ask request validation") {
    auto r = AskRequest::parse(R"({"query":"paddy top dressing","rephrase":false,"metadata":{"crop":"paddy"}})");
    CHECK(r.query == "paddy top dressing");
    CHECK_FALSE(r.rephrase);
    REQUIRE(r.metadata);
    CHECK(r.metadata->crop == "paddy");
    CHECK_FALSE(r.metadata->season);
    CHECK(AskRequest::parse(R"({"query":"x"})").rephrase);

    for (const char* bad : {"", "[]", "{", R"({"q":"x"})", R"({"query":5})", R"({"query":"   "})",
                            R"({"query":"x","rephrase":"yes"})", R"({"query":"x","metadata":[]})",
                            R"({"query":"x","metadata":{"crop":1}})"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(AskRequest::parse(bad), Error);
    }
    const std::string long_q = R"({"query":")" + std::string(11, 'a') + "\"}";
    CHECK_THROWS_AS(AskRequest::parse(long_q, 10), Error);
    CHECK_NOTHROW(AskRequest::parse(R"({"query":"ééééé"})", 5));
}

TEST_CASE("log entry JSON round trip") {
    auto e = sample_entry("01ARZ3NDEKTSV4RRFFQ69G5FAV");
    e.timestamp_ms = 1700000000000;
    CHECK(entry_from_json(to_json(e)) == e);
    e.request.metadata.reset();
    e.response.rephrased_answer.reset();
    e.response.rephrase_ms.reset();
    CHECK(entry_from_json(to_json(e)) == e);
    CHECK_THROWS_AS(entry_from_json("{}"), Error);
}

TEST_CASE("ULIDs are 26 chars and strictly increasing") {
    UlidGenerator g;
    std::string prev;
    for (int i = 0; i < 5000; ++i) {
        auto id = g.next();
        REQUIRE(id.size() == 26);
        CHECK(id.find_first_not_of("0123456789ABCDEFGHJKMNPQRSTVWXYZ") == std::string::npos);
        CHECK(id > prev);
        prev = id;
    }
}

TEST_CASE("rate limiter") {
    RateLimiter off(0, 0);
    for (int i = 0; i < 1000; ++i) CHECK(off.allow("a"));
    RateLimiter two(2, 2);
    CHECK(two.allow("a"));
    CHECK(two.allow("a"));
    CHECK_FALSE(two.allow("a"));
    CHECK(two.allow("b"));
}

TEST_CASE("address parsing") {
    CHECK(parse_addr("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
    CHECK(parse_addr("localhost:0").second == 0);
    for (const char* bad : {"", "host", ":80", "h:", "h:x", "h:70000", "h:-1"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_addr(bad), Error);
    }
}

TEST_CASE("jsonl log persists, replays and orders newest first") {
    testsupport::TempDir dir;
    const auto path = dir / "log.jsonl";
    {
        JsonlQueryLog log(path, std::chrono::milliseconds(10));
        std::int64_t last = 0;
        for (int i = 0; i < 5; ++i) {
            auto stamped = log.append(sample_entry("id" + std::to_string(i)));
            CHECK(stamped.timestamp_ms >= last);
            last = stamped.timestamp_ms;
        }
        log.flush();
        CHECK(testsupport::read_lines(path).size() == 5);
        auto r = log.recent(2);
        REQUIRE(r.size() == 2);
        CHECK(r[0].response.id == "id4");
        CHECK(r[1].response.id == "id3");
    }
    {
        std::ofstream(path, std::ios::app) << "not json\n";
    }
    JsonlQueryLog again(path);
    CHECK(again.size() == 5);
    CHECK(again.skipped_on_replay() == 1);
    CHECK(again.recent(100).back().response.id == "id0");
    auto next = again.append(sample_entry("id5"));
    CHECK(next.timestamp_ms >= again.recent(2)[1].timestamp_ms);
}

TEST_CASE("ask, history and health handlers") {
    testsupport::TempDir dir;
    auto log = std::make_shared<JsonlQueryLog>(dir / "log.jsonl");
    Service svc(fixture_pipeline(), log, unlimited());

    auto r = svc.handle_ask(R"({"query":"Leaf folder control Paddy"})", "c");
    REQUIRE(r.status == 200);
    auto j = json::parse(r.body);
    CHECK(j["normalized_query"] == "leaf folder control paddy");
    CHECK(j["raw_answer"] == "recommended for spray cartaphydrochloride 2 grams per litre of water");
    CHECK(j["id"].get<std::string>().size() == 26);
    CHECK(j["rephrase_status"] == "fallback_provider_error");
    CHECK(j["rephrased_answer"].is_null());

    CHECK(svc.handle_ask(R"({"query":""})", "c").status == 400);
    CHECK(svc.handle_ask(R"({"query":"not a fixture"})", "c").status == 502);

    auto h = svc.handle_history(std::nullopt);
    REQUIRE(h.status == 200);
    auto arr = json::parse(h.body);
    REQUIRE(arr.size() == 1);
    CHECK(arr[0]["response"]["id"] == j["id"]);
    CHECK(svc.handle_history("0").status == 400);
    CHECK(svc.handle_history("1001").status == 400);
    CHECK(svc.handle_history("ten").status == 400);
    CHECK(svc.handle_history("1000").status == 200);

    auto health = json::parse(svc.handle_health().body);
    CHECK(health["status"] == "ok");
    CHECK(health["providers"]["rephrase"] == "ok");
}

TEST_CASE("rate limited asks get 429") {
    testsupport::TempDir dir;
    ServiceConfig c = unlimited();
    c.rate_limit = 1;
    Service svc(fixture_pipeline(), std::make_shared<JsonlQueryLog>(dir / "log.jsonl"), c);
    const std::string body = R"({"query":"leaf folder control paddy","rephrase":false})";
    CHECK(svc.handle_ask(body, "ip").status == 200);
    CHECK(svc.handle_ask(body, "ip").status == 429);
    CHECK(svc.handle_ask(body, "other").status == 200);
}

TEST_CASE("health reflects provider state") {
    modelgw::StubProviderServer gen(gen_fixtures()), reph(reph_fixtures());
    gen.start();
    reph.start();
    auto http = [](const modelgw::StubProviderServer& s) {
        modelgw::ProviderConfig c;
        c.base_url = s.url();
        c.timeout = std::chrono::milliseconds(300);
        return std::make_shared<modelgw::HttpProvider>(c);
    };
    testsupport::TempDir dir;
    auto log = std::make_shared<JsonlQueryLog>(dir / "log.jsonl");
    auto status = [&](std::shared_ptr<modelgw::Provider> r) {
        auto p = std::make_shared<const modelgw::AnswerPipeline>(rules(), http(gen), std::move(r));
        Service svc(p, log, unlimited());
        return json::parse(svc.handle_health().body);
    };
    CHECK(status(http(reph))["status"] == "ok");
    CHECK(status(nullptr)["providers"]["rephrase"] == "disabled");
    reph.set_fault({modelgw::FaultMode::Status, 503, 0});
    CHECK(status(http(reph))["status"] == "degraded");
    reph.set_fault({});
    gen.set_fault({modelgw::FaultMode::Hang});
    auto down = status(http(reph));
    CHECK(down["status"] == "down");
    CHECK(down["providers"]["generate"] == "down");
}

TEST_CASE("HTTP round trip with concurrent asks") {
    testsupport::TempDir dir;
    auto log = std::make_shared<JsonlQueryLog>(dir / "log.jsonl");
    Service svc(fixture_pipeline(), log, unlimited());
    const int port = svc.start("127.0.0.1", 0);
    REQUIRE(port > 0);

    std::vector<std::future<int>> futures;
    for (int i = 0; i < 64; ++i) {
        futures.push_back(std::async(std::launch::async, [port] {
            httplib::Client cli("127.0.0.1", port);
            auto res = cli.Post("/v1/ask", R"({"query":"paddy top dressing"})", "application/json");
            if (!res) MESSAGE(httplib::to_string(res.error())); return res ? res->status : -1;
        }));
    }
    for (auto& f : futures) CHECK(f.get() == 200);

    httplib::Client cli("127.0.0.1", port);
    auto hist = cli.Get("/v1/history?limit=100");
    REQUIRE(hist);
    CHECK(hist->status == 200);
    CHECK(hist->get_header_value("Access-Control-Allow-Origin") == "*");
    auto arr = json::parse(hist->body);
    CHECK(arr.size() == 64);
    std::set<std::string> ids;
    for (const auto& e : arr) ids.insert(e["response"]["id"].get<std::string>());
    CHECK(ids.size() == 64);
    CHECK(arr[0]["response"]["rephrase_status"] == "ok");

    auto pre = cli.Options("/v1/ask");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(cli.Get("/v1/health")->status == 200);
    CHECK(cli.Post("/v1/ask", "nope", "application/json")->status == 400);

    svc.stop();
    CHECK(testsupport::read_lines(dir / "log.jsonl").size() == 64);
}
