#include "agriqa/modelgw.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "agriqa/text.hpp"

namespace agriqa::modelgw {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "provider URL lacks a scheme: " + url);
    const auto scheme = text::to_lower(url.substr(0, scheme_end));
    if (scheme != "http" && scheme != "https")
        throw Error(ErrorCode::InvalidArgument, "unsupported provider URL scheme: " + scheme);
    const auto host_begin = scheme_end + 3;
    const auto slash = url.find('/', host_begin);
    ParsedUrl out;
    out.origin = url.substr(0, slash);
    out.path = slash == std::string::npos ? "/" : url.substr(slash);
    if (out.origin.size() <= host_begin) throw Error(ErrorCode::InvalidArgument, "provider URL lacks a host: " + url);
    return out;
}

Millis since(Clock::time_point t0) {
    return std::chrono::duration_cast<Millis>(Clock::now() - t0);
}

Millis jittered_backoff(const RetryPolicy& p, int retry_index) {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    auto d = p.base_backoff.count() << std::min(retry_index, 20);
    d = std::min<long long>(d, p.max_backoff.count());
    std::uniform_int_distribution<long long> dist(d / 2, std::max<long long>(d / 2, d));
    return Millis(dist(rng));
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

void ProviderConfig::validate() const {
    if (base_url.empty()) throw Error(ErrorCode::InvalidArgument, "provider URL is empty");
    if (timeout.count() <= 0) throw Error(ErrorCode::InvalidArgument, "provider timeout must be positive");
    if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "max_retries must be >= 0");
}

// ---------------------------------------------------------------------------
// HttpProvider

HttpProvider::HttpProvider(ProviderConfig config, RetryPolicy retry) : config_(std::move(config)), retry_(retry) {
    config_.validate();
    auto u = parse_url(config_.base_url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (u.origin.rfind("https", 0) == 0) throw Error(ErrorCode::InvalidArgument, "https is not supported by this build");
#endif
    origin_ = std::move(u.origin);
    path_ = std::move(u.path);
}

Completion HttpProvider::complete(std::string_view input) const {
    const auto start = Clock::now();
    const auto budget = config_.timeout * (1 + config_.max_retries);
    const auto deadline = start + budget;

    json body{{"input", std::string(input)}, {"model", config_.model_name}};
    const std::string payload = body.dump(-1, ' ', false, json::error_handler_t::replace);
    httplib::Headers headers;
    if (config_.auth_token && !config_.auth_token->empty())
        headers.emplace("Authorization", "Bearer " + *config_.auth_token);

    std::optional<ProviderError> last;
    int attempts = 0;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        const auto remaining = std::chrono::duration_cast<Millis>(deadline - Clock::now());
        if (remaining.count() <= 0) break;
        const auto per_attempt = std::min(config_.timeout, remaining);
        ++attempts;

        httplib::Client client(origin_);
        client.set_connection_timeout(per_attempt);
        client.set_read_timeout(per_attempt);
        client.set_write_timeout(per_attempt);
        const auto t0 = Clock::now();
        auto res = client.Post(path_, headers, payload, "application/json");

        bool retry = false;
        if (!res) {
            const bool timed_out = since(t0) + Millis(5) >= per_attempt ||
                                   res.error() == httplib::Error::ConnectionTimeout;
            last.emplace(timed_out ? ErrorCode::ProviderTimeout : ErrorCode::ProviderUnreachable,
                         std::string(timed_out ? "timeout" : "unreachable") + " calling " + origin_ + path_ + ": " +
                             httplib::to_string(res.error()),
                         0, attempts);
            retry = true;
        } else if (res->status < 200 || res->status >= 300) {
            last.emplace(ErrorCode::ProviderStatus,
                         "provider " + origin_ + path_ + " returned HTTP " + std::to_string(res->status), res->status,
                         attempts);
            retry = retryable_status(res->status);
        } else {
            json parsed = json::parse(res->body, nullptr, false);
            if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("output") ||
                !parsed["output"].is_string()) {
                throw ProviderError(ErrorCode::ProviderMalformed, "malformed provider response from " + origin_ + path_,
                                    res->status, attempts);
            }
            auto out = parsed["output"].get<std::string>();
            if (text::trim(out).empty())
                throw ProviderError(ErrorCode::ProviderEmpty, "provider returned empty output", res->status, attempts);
            return {std::move(out), attempts};
        }
        if (!retry) break;
        if (attempt < config_.max_retries) {
            const auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now());
            const auto pause = std::min(jittered_backoff(retry_, attempt), left);
            if (pause.count() > 0) std::this_thread::sleep_for(pause);
        }
    }
    if (!last) last.emplace(ErrorCode::ProviderTimeout, "provider deadline exhausted", 0, attempts);
    throw ProviderError(last->code(), std::string(last->what()) + " after " + std::to_string(attempts) + " attempt(s)",
                        last->http_status(), attempts);
}

bool HttpProvider::probe(Millis timeout) const {
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Get("/health");
    return res && res->status < 500;
}

// ---------------------------------------------------------------------------
// FixtureProvider

FixtureProvider::FixtureProvider(std::map<std::string, std::string> fixtures, std::string model_name)
    : fixtures_(fixtures.begin(), fixtures.end()), model_name_(std::move(model_name)) {}

std::shared_ptr<FixtureProvider> FixtureProvider::from_file(const std::filesystem::path& path, std::string model_name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open provider fixtures " + path.string());
    std::map<std::string, std::string> fixtures;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            fixtures[j.at("input").get<std::string>()] = j.at("output").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return std::make_shared<FixtureProvider>(std::move(fixtures), std::move(model_name));
}

std::optional<std::string> FixtureProvider::lookup(std::string_view input) const {
    if (auto it = fixtures_.find(input); it != fixtures_.end()) return it->second;
    if (input.substr(0, kRephrasePrefix.size()) == kRephrasePrefix) {
        if (auto it = fixtures_.find(input.substr(kRephrasePrefix.size())); it != fixtures_.end()) return it->second;
    }
    return std::nullopt;
}

Completion FixtureProvider::complete(std::string_view input) const {
    auto hit = lookup(input);
    if (!hit) throw ProviderError(ErrorCode::ProviderStatus, "no fixture for input: " + std::string(input), 404);
    if (text::trim(*hit).empty()) throw ProviderError(ErrorCode::ProviderEmpty, "fixture output is empty", 200);
    return {*hit, 1};
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
    constexpr std::string_view stub = "stub:";
    if (config.base_url.rfind(stub, 0) == 0) {
        return FixtureProvider::from_file(config.base_url.substr(stub.size()),
                                          config.model_name.empty() ? "fixture" : config.model_name);
    }
    return std::make_shared<HttpProvider>(config);
}

// ---------------------------------------------------------------------------
// Prompt, generation, rephrasing

const char* to_string(RephraseStatus s) {
    switch (s) {
        case RephraseStatus::Ok: return "ok";
        case RephraseStatus::Skipped: return "skipped";
        case RephraseStatus::FallbackProviderError: return "fallback_provider_error";
        case RephraseStatus::FallbackTimeout: return "fallback_timeout";
    }
    return "skipped";
}

RephraseStatus parse_rephrase_status(std::string_view s) {
    if (s == "ok") return RephraseStatus::Ok;
    if (s == "skipped") return RephraseStatus::Skipped;
    if (s == "fallback_provider_error") return RephraseStatus::FallbackProviderError;
    if (s == "fallback_timeout") return RephraseStatus::FallbackTimeout;
    throw Error(ErrorCode::Parse, "unknown rephrase status: " + std::string(s));
}

std::string build_rephrase_prompt(std::string_view response) {
    if (response.empty()) throw Error(ErrorCode::InvalidArgument, "cannot build a rephrase prompt for an empty response");
    std::string prompt(kRephrasePrefix);
    prompt.append(response);
    return prompt;
}

Completion generate_answer(std::string_view query, const Provider& provider) {
    if (text::trim(query).empty()) throw Error(ErrorCode::InvalidArgument, "query is empty");
    return provider.complete(query);
}

Completion generate_answer(std::string_view query, const ProviderConfig& config) {
    return generate_answer(query, *make_provider(config));
}

RephraseResult rephrase(std::string_view raw_answer, const Provider& provider) {
    RephraseResult out;
    const auto t0 = Clock::now();
    try {
        auto c = provider.complete(build_rephrase_prompt(raw_answer));
        out.status = RephraseStatus::Ok;
        out.text = std::move(c.text);
    } catch (const ProviderError& e) {
        out.status = e.code() == ErrorCode::ProviderTimeout ? RephraseStatus::FallbackTimeout
                                                            : RephraseStatus::FallbackProviderError;
        out.detail = e.what();
    } catch (const std::exception& e) {
        out.status = RephraseStatus::FallbackProviderError;
        out.detail = e.what();
    }
    out.latency = since(t0);
    return out;
}

std::string AnswerBundle::to_json() const {
    nlohmann::ordered_json j;
    j["query_normalized"] = query_normalized;
    j["raw_answer"] = raw_answer;
    j["rephrased_answer"] = rephrased_answer ? nlohmann::ordered_json(*rephrased_answer) : nlohmann::ordered_json(nullptr);
    j["rephrase_status"] = to_string(rephrase_status);
    j["latency_generate_ms"] = latency_generate.count();
    j["latency_rephrase_ms"] = latency_rephrase ? nlohmann::ordered_json(latency_rephrase->count()) : nlohmann::ordered_json(nullptr);
    j["generate_attempts"] = generate_attempts;
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

AnswerPipeline::AnswerPipeline(std::shared_ptr<const normalize::NormalizationRuleSet> rules,
                               std::shared_ptr<Provider> generator, std::shared_ptr<Provider> rephraser)
    : rules_(std::move(rules)), generator_(std::move(generator)), rephraser_(std::move(rephraser)) {
    if (!rules_ || !generator_) throw Error(ErrorCode::InvalidArgument, "pipeline needs rules and a generator");
}

AnswerBundle AnswerPipeline::answer(std::string_view query, bool rephrase_enabled) const {
    if (text::trim(query).empty()) throw Error(ErrorCode::InvalidArgument, "query is empty");
    AnswerBundle b;
    b.query_normalized = normalize::normalize_text(query, *rules_);
    const auto t0 = Clock::now();
    auto gen = generate_answer(b.query_normalized, *generator_);
    b.latency_generate = since(t0);
    b.raw_answer = std::move(gen.text);
    b.generate_attempts = gen.attempts;
    if (rephrase_enabled && rephraser_) {
        auto r = rephrase(b.raw_answer, *rephraser_);
        b.rephrase_status = r.status;
        b.rephrased_answer = std::move(r.text);
        b.latency_rephrase = r.latency;
    }
    return b;
}

// ---------------------------------------------------------------------------
// StubProviderServer

StubProviderServer::StubProviderServer(std::shared_ptr<FixtureProvider> fixtures, StubFault fault)
    : fixtures_(std::move(fixtures)), server_(std::make_unique<httplib::Server>()), fault_(fault) {
    auto fault_response = [this](httplib::Response& res) -> bool {
        StubFault f;
        {
            std::lock_guard lock(mu_);
            f = fault_;
        }
        switch (f.mode) {
            case FaultMode::None: return false;
            case FaultMode::Hang: {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return stopping_; });
                res.status = 503;
                return true;
            }
            case FaultMode::Status:
                res.status = f.status;
                res.set_content(R"({"error":"injected"})", "application/json");
                return true;
            case FaultMode::FailThenOk:
                if (failures_served_.fetch_add(1) < f.fail_count) {
                    res.status = f.status;
                    res.set_content(R"({"error":"injected"})", "application/json");
                    return true;
                }
                return false;
            case FaultMode::Malformed:
                res.status = 200;
                res.set_content("<html>not json", "text/html");
                return true;
            case FaultMode::Empty:
                res.status = 200;
                res.set_content(R"({"output":""})", "application/json");
                return true;
        }
        return false;
    };

    server_->Get("/health", [this, fault_response](const httplib::Request&, httplib::Response& res) {
        StubFault f;
        {
            std::lock_guard lock(mu_);
            f = fault_;
        }
        if (f.mode == FaultMode::Hang || f.mode == FaultMode::Status) {
            fault_response(res);
            return;
        }
        res.set_content(R"({"status":"ok"})", "application/json");
    });
    server_->Post(".*", [this, fault_response](const httplib::Request& req, httplib::Response& res) {
        ++requests_;
        if (fault_response(res)) return;
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("input") || !body["input"].is_string()) {
            res.status = 400;
            res.set_content(R"({"error":"expected {\"input\": string}"})", "application/json");
            return;
        }
        auto hit = fixtures_->lookup(body["input"].get<std::string>());
        if (!hit) {
            res.status = 404;
            res.set_content(R"({"error":"no fixture for input"})", "application/json");
            return;
        }
        res.set_content(json{{"output", *hit}}.dump(), "application/json");
    });
}

StubProviderServer::~StubProviderServer() { stop(); }

int StubProviderServer::start(const std::string& host, int port) {
    host_ = host;
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else {
        port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw Error(ErrorCode::Network, "stub provider cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void StubProviderServer::stop() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

std::string StubProviderServer::url(std::string_view path) const {
    return "http://" + host_ + ":" + std::to_string(port_) + std::string(path);
}

void StubProviderServer::set_fault(StubFault fault) {
    std::lock_guard lock(mu_);
    fault_ = fault;
    failures_served_ = 0;
}

}  // namespace agriqa::modelgw
