#include <doctest.h>

#include <chrono>

#include "agriqa/modelgw.hpp"
#include "agriqa/normalize.hpp"
#include "support.hpp"

using namespace agriqa;
using namespace agriqa::modelgw;
using Clock = std::chrono::steady_clock;

namespace {

std::shared_ptr<FixtureProvider> fixtures() {
    return FixtureProvider::from_file(testsupport::data_dir() / "fixtures" / "generate.jsonl", "stub-gen");
}

std::shared_ptr<FixtureProvider> small_fixtures() {
    return std::make_shared<FixtureProvider>(
        std::map<std::string, std::string>{{"q", "answer one"}, {"apply urea", "Apply urea gently."}, {"blank", "  "}});
}

ProviderConfig cfg_for(const StubProviderServer& s, int timeout_ms, int retries) {
    ProviderConfig c;
    c.base_url = s.url();
    c.timeout = Millis(timeout_ms);
    c.max_retries = retries;
    c.model_name = "m";
    return c;
}

long long elapsed_ms(Clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
}

RetryPolicy fast() { return {Millis(5), Millis(20)}; }

}  // namespace

TEST_CASE("rephrase prompt is byte exact") {
    CHECK(build_rephrase_prompt("apply urea") == "Paraphrase and Correct Tone: apply urea");
    CHECK(build_rephrase_prompt(" x ") == "Paraphrase and Correct Tone:  x ");
    CHECK_THROWS_AS(build_rephrase_prompt(""), Error);
}

TEST_CASE("property: rephrase prompt is prefix plus input") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        testsupport::Gen g(seed);
        auto s = g.messy_text(10) + g.word();
        auto p = build_rephrase_prompt(s);
        CHECK(p.size() == kRephrasePrefix.size() + s.size());
        CHECK(p.compare(kRephrasePrefix.size(), std::string::npos, s) == 0);
    }
}

TEST_CASE("fixture provider") {
    auto f = fixtures();
    CHECK(f->complete("leaf folder control paddy").text ==
          "recommended for spray cartaphydrochloride 2 grams per litre of water");
    CHECK(f->model_name() == "stub-gen");
    try {
        f->complete("unknown query");
        FAIL("expected a provider error");
    } catch (const ProviderError& e) {
        CHECK(e.code() == ErrorCode::ProviderStatus);
        CHECK(e.http_status() == 404);
    }
    auto s = small_fixtures();
    CHECK(s->complete(build_rephrase_prompt("apply urea")).text == "Apply urea gently.");
    CHECK_THROWS_AS(s->complete("blank"), ProviderError);
    CHECK_THROWS_AS(FixtureProvider::from_file("/nonexistent/fx.jsonl"), Error);
}

TEST_CASE("provider config validation and URL handling") {
    ProviderConfig c;
    CHECK_THROWS_AS(c.validate(), Error);
    c.base_url = "ftp://host/x";
    CHECK_THROWS_AS(HttpProvider{c}, Error);
    c.base_url = "localhost:80";
    CHECK_THROWS_AS(HttpProvider{c}, Error);
    c.base_url = "http://127.0.0.1:1/v1";
    c.timeout = Millis(0);
    CHECK_THROWS_AS(HttpProvider{c}, Error);
    c.timeout = Millis(100);
    c.max_retries = -1;
    CHECK_THROWS_AS(HttpProvider{c}, Error);
    c.max_retries = 0;
    CHECK_NOTHROW(HttpProvider{c});
    c.base_url = "stub:" + (testsupport::data_dir() / "fixtures" / "generate.jsonl").string();
    CHECK(make_provider(c)->complete("leaf folder control paddy").text.find("cartaphydrochloride") != std::string::npos);
}

TEST_CASE("http provider against the stub server") {
    StubProviderServer server(small_fixtures());
    server.start();
    HttpProvider p(cfg_for(server, 1000, 2), fast());

    SUBCASE("success") {
        auto c = p.complete("q");
        CHECK(c.text == "answer one");
        CHECK(c.attempts == 1);
        CHECK(p.probe(Millis(500)));
    }
    SUBCASE("5xx then success retries") {
        server.set_fault({FaultMode::FailThenOk, 503, 2});
        auto c = p.complete("q");
        CHECK(c.text == "answer one");
        CHECK(c.attempts == 3);
        CHECK(c.retries() == 2);
    }
    SUBCASE("persistent 500 exhausts retries") {
        server.set_fault({FaultMode::Status, 500, 0});
        try {
            p.complete("q");
            FAIL("expected a provider error");
        } catch (const ProviderError& e) {
            CHECK(e.code() == ErrorCode::ProviderStatus);
            CHECK(e.http_status() == 500);
            CHECK(e.attempts() == 3);
        }
        CHECK(server.request_count() == 3);
        CHECK_FALSE(p.probe(Millis(500)));
    }
    SUBCASE("4xx is not retried") {
        try {
            p.complete("not in fixtures");
            FAIL("expected a provider error");
        } catch (const ProviderError& e) {
            CHECK(e.http_status() == 404);
            CHECK(e.attempts() == 1);
        }
    }
    SUBCASE("malformed body") {
        server.set_fault({FaultMode::Malformed});
        try {
            p.complete("q");
            FAIL("expected a provider error");
        } catch (const ProviderError& e) {
            CHECK(e.code() == ErrorCode::ProviderMalformed);
        }
    }
    SUBCASE("empty output") {
        server.set_fault({FaultMode::Empty});
        try {
            p.complete("q");
            FAIL("expected a provider error");
        } catch (const ProviderError& e) {
            CHECK(e.code() == ErrorCode::ProviderEmpty);
        }
    }
}

TEST_CASE("hanging provider is bounded by timeout times attempts") {
    StubProviderServer server(small_fixtures(), {FaultMode::Hang});
    server.start();
    HttpProvider p(cfg_for(server, 150, 2), fast());
    const auto t0 = Clock::now();
    try {
        p.complete("q");
        FAIL("expected a timeout");
    } catch (const ProviderError& e) {
        CHECK(e.code() == ErrorCode::ProviderTimeout);
    }
    const auto ms = elapsed_ms(t0);
    CHECK(ms >= 150);
    CHECK(ms <= 150 * 3 + 200);
    CHECK_FALSE(p.probe(Millis(100)));
}

TEST_CASE("unreachable provider") {
    int port;
    {
        StubProviderServer tmp(small_fixtures());
        port = tmp.start();
    }
    ProviderConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/complete";
    c.timeout = Millis(200);
    c.max_retries = 1;
    HttpProvider p(c, fast());
    try {
        p.complete("q");
        FAIL("expected an error");
    } catch (const ProviderError& e) {
        CHECK((e.code() == ErrorCode::ProviderUnreachable || e.code() == ErrorCode::ProviderTimeout));
        CHECK(e.attempts() == 2);
    }
}

TEST_CASE("rephrase falls back instead of throwing") {
    StubProviderServer server(small_fixtures());
    server.start();
    HttpProvider p(cfg_for(server, 150, 0), fast());

    auto ok = rephrase("apply urea", p);
    CHECK(ok.status == RephraseStatus::Ok);
    CHECK(ok.text == "Apply urea gently.");

    const std::vector<std::pair<StubFault, RephraseStatus>> cases{
        {{FaultMode::Status, 500, 0}, RephraseStatus::FallbackProviderError},
        {{FaultMode::Malformed}, RephraseStatus::FallbackProviderError},
        {{FaultMode::Empty}, RephraseStatus::FallbackProviderError},
        {{FaultMode::Hang}, RephraseStatus::FallbackTimeout},
    };
    for (const auto& [fault, expected] : cases) {
        server.set_fault(fault);
        RephraseResult r;
        CHECK_NOTHROW(r = rephrase("apply urea", p));
        CHECK(r.status == expected);
        CHECK_FALSE(r.text.has_value());
        CHECK_FALSE(r.detail.empty());
    }
    auto empty = rephrase("", *small_fixtures());
    CHECK(empty.status == RephraseStatus::FallbackProviderError);
}

TEST_CASE("answer pipeline") {
    auto rules = std::make_shared<const normalize::NormalizationRuleSet>(
        normalize::NormalizationRuleSet::load(testsupport::data_dir() / "rules"));
    auto rephraser = std::make_shared<FixtureProvider>(std::map<std::string, std::string>{
        {"recommended for spray cartaphydrochloride 2 grams per litre of water", "Spray cartap hydrochloride at 2 g/L."}});
    AnswerPipeline pipe(rules, fixtures(), rephraser);

    auto b = pipe.answer("Leaf folder control paddy", true);
    CHECK(b.query_normalized == "leaf folder control paddy");
    CHECK(b.raw_answer == "recommended for spray cartaphydrochloride 2 grams per litre of water");
    CHECK(b.rephrased_answer == "Spray cartap hydrochloride at 2 g/L.");
    CHECK(b.rephrase_status == RephraseStatus::Ok);
    CHECK(b.latency_rephrase.has_value());

    auto skipped = pipe.answer("leaf folder control paddy", false);
    CHECK(skipped.rephrase_status == RephraseStatus::Skipped);
    CHECK_FALSE(skipped.rephrased_answer);
    CHECK_FALSE(skipped.latency_rephrase);
    CHECK(skipped.to_json().find("\"rephrased_answer\":null") != std::string::npos);

    CHECK_THROWS_AS(pipe.answer("   ", true), Error);
    CHECK_THROWS_AS(pipe.answer("something unknown", true), ProviderError);
    CHECK_THROWS_AS(AnswerPipeline(rules, nullptr, nullptr), Error);

    AnswerPipeline no_rephrase(rules, fixtures(), nullptr);
    CHECK(no_rephrase.answer("leaf folder control paddy", true).rephrase_status == RephraseStatus::Skipped);
}

TEST_CASE("rephrase status names round trip") {
    for (auto s : {RephraseStatus::Ok, RephraseStatus::Skipped, RephraseStatus::FallbackProviderError,
                   RephraseStatus::FallbackTimeout})
        CHECK(parse_rephrase_status(to_string(s)) == s);
    CHECK_THROWS_AS(parse_rephrase_status("fine"), Error);
}
