#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "agriqa/error.hpp"
#include "agriqa/normalize.hpp"

namespace httplib {
class Server;
}

namespace agriqa::modelgw {

using Millis = std::chrono::milliseconds;

/// Endpoint settings for one provider. `base_url` is either an http(s) URL
/// that receives the POST, or "stub:<fixture.jsonl>" for the built-in
/// fixture-backed provider.
struct ProviderConfig {
    std::string base_url;
    Millis timeout{10000};
    int max_retries = 2;
    std::optional<std::string> auth_token;
    std::string model_name;

    void validate() const;
};

class ProviderError : public Error {
public:
    ProviderError(ErrorCode code, const std::string& message, int http_status = 0, int attempts = 1)
        : Error(code, message), http_status_(http_status), attempts_(attempts) {}

    int http_status() const noexcept { return http_status_; }
    int attempts() const noexcept { return attempts_; }

private:
    int http_status_;
    int attempts_;
};

struct Completion {
    std::string text;
    int attempts = 1;

    int retries() const { return attempts - 1; }
};

/// A text-in/text-out endpoint. Implementations are safe to call from many
/// threads at once.
class Provider {
public:
    virtual ~Provider() = default;

    /// Returns the provider output verbatim. Throws ProviderError.
    virtual Completion complete(std::string_view input) const = 0;
    virtual bool probe(Millis timeout) const = 0;
    virtual const std::string& model_name() const = 0;
};

struct RetryPolicy {
    Millis base_backoff{50};
    Millis max_backoff{1000};
};

/// JSON over HTTP: POST {"input", "model"} -> {"output"}. Retries timeouts,
/// connection failures and 408/429/5xx with jittered exponential backoff.
/// All attempts share one deadline of timeout * (1 + max_retries).
class HttpProvider final : public Provider {
public:
    explicit HttpProvider(ProviderConfig config, RetryPolicy retry = {});

    Completion complete(std::string_view input) const override;
    bool probe(Millis timeout) const override;
    const std::string& model_name() const override { return config_.model_name; }

private:
    ProviderConfig config_;
    RetryPolicy retry_;
    std::string origin_;
    std::string path_;
};

/// Deterministic provider answering from an {"input", "output"} JSONL file.
/// Inputs carrying the rephrase prompt prefix also match on the bare response.
class FixtureProvider final : public Provider {
public:
    FixtureProvider(std::map<std::string, std::string> fixtures, std::string model_name = "fixture");
    static std::shared_ptr<FixtureProvider> from_file(const std::filesystem::path& path,
                                                      std::string model_name = "fixture");

    Completion complete(std::string_view input) const override;
    bool probe(Millis) const override { return true; }
    const std::string& model_name() const override { return model_name_; }

    std::optional<std::string> lookup(std::string_view input) const;

private:
    std::map<std::string, std::string, std::less<>> fixtures_;
    std::string model_name_;
};

std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

// ---------------------------------------------------------------------------

enum class RephraseStatus { Ok, Skipped, FallbackProviderError, FallbackTimeout };
const char* to_string(RephraseStatus s);
RephraseStatus parse_rephrase_status(std::string_view s);

inline constexpr std::string_view kRephrasePrefix = "Paraphrase and Correct Tone: ";

/// "Paraphrase and Correct Tone: " + response, byte for byte.
std::string build_rephrase_prompt(std::string_view response);

Completion generate_answer(std::string_view query, const Provider& provider);
Completion generate_answer(std::string_view query, const ProviderConfig& config);

struct RephraseResult {
    RephraseStatus status = RephraseStatus::Skipped;
    std::optional<std::string> text;  // set iff status == Ok
    Millis latency{0};
    std::string detail;
};

/// Never throws: provider failures become fallback statuses.
RephraseResult rephrase(std::string_view raw_answer, const Provider& provider);

struct AnswerBundle {
    std::string query_normalized;
    std::string raw_answer;
    std::optional<std::string> rephrased_answer;
    RephraseStatus rephrase_status = RephraseStatus::Skipped;
    Millis latency_generate{0};
    std::optional<Millis> latency_rephrase;
    int generate_attempts = 1;

    std::string to_json() const;
};

/// normalize -> generate -> optional rephrase. Generation failures throw;
/// rephrase failures only change rephrase_status.
class AnswerPipeline {
public:
    AnswerPipeline(std::shared_ptr<const normalize::NormalizationRuleSet> rules, std::shared_ptr<Provider> generator,
                   std::shared_ptr<Provider> rephraser);

    AnswerBundle answer(std::string_view query, bool rephrase_enabled) const;

    const Provider& generator() const { return *generator_; }
    const Provider* rephraser() const { return rephraser_.get(); }

private:
    std::shared_ptr<const normalize::NormalizationRuleSet> rules_;
    std::shared_ptr<Provider> generator_;
    std::shared_ptr<Provider> rephraser_;
};

// ---------------------------------------------------------------------------

enum class FaultMode { None, Hang, Status, FailThenOk, Malformed, Empty };

struct StubFault {
    FaultMode mode = FaultMode::None;
    int status = 500;     // for Status and FailThenOk
    int fail_count = 0;   // for FailThenOk
};

/// HTTP front for a FixtureProvider, with injectable faults. Serves
/// POST on any path and GET /health.
class StubProviderServer {
public:
    explicit StubProviderServer(std::shared_ptr<FixtureProvider> fixtures, StubFault fault = {});
    ~StubProviderServer();
    StubProviderServer(const StubProviderServer&) = delete;
    StubProviderServer& operator=(const StubProviderServer&) = delete;

    /// Binds and serves in a background thread. Port 0 picks a free port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    std::string url(std::string_view path = "/v1/complete") const;
    void set_fault(StubFault fault);
    int request_count() const { return requests_.load(); }

private:
    std::shared_ptr<FixtureProvider> fixtures_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::string host_;
    int port_ = 0;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    StubFault fault_;
    bool stopping_ = false;
    std::atomic<int> requests_{0};
    std::atomic<int> failures_served_{0};
};

}  // namespace agriqa::modelgw
