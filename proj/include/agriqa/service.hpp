#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "agriqa/modelgw.hpp"

namespace httplib {
class Server;
}

namespace agriqa::service {

struct QueryMetadata {
    std::optional<std::string> crop;
    std::optional<std::string> sector;
    std::optional<std::string> season;

    bool operator==(const QueryMetadata&) const = default;
};

struct AskRequest {
    std::string query;
    bool rephrase = true;
    std::optional<QueryMetadata> metadata;

    /// Throws Error(Validation) for bad JSON, empty or oversized queries.
    static AskRequest parse(std::string_view body, std::size_t max_chars = 2000);
    bool operator==(const AskRequest&) const = default;
};

struct AskResponse {
    std::string id;
    std::string normalized_query;
    std::string raw_answer;
    std::optional<std::string> rephrased_answer;
    modelgw::RephraseStatus rephrase_status = modelgw::RephraseStatus::Skipped;
    long long generate_ms = 0;
    std::optional<long long> rephrase_ms;

    bool operator==(const AskResponse&) const = default;
};

struct QueryLogEntry {
    std::int64_t timestamp_ms = 0;
    AskRequest request;
    AskResponse response;
    std::string generate_model;
    std::string rephrase_model;

    bool operator==(const QueryLogEntry&) const = default;
};

std::string to_json(const AskResponse& r);
std::string to_json(const QueryLogEntry& e);
QueryLogEntry entry_from_json(std::string_view line);

/// Storage seam for the query log.
class QueryLogStore {
public:
    virtual ~QueryLogStore() = default;
    /// Stamps the entry (non-decreasing within a process) and stores it.
    virtual QueryLogEntry append(QueryLogEntry entry) = 0;
    /// Newest first.
    virtual std::vector<QueryLogEntry> recent(std::size_t limit) const = 0;
    virtual std::size_t size() const = 0;
    virtual void flush() = 0;
};

/// Append-only JSON Lines file. Handlers enqueue; one writer thread appends
/// and fsyncs at most every `fsync_interval`. Existing entries are replayed
/// on open.
class JsonlQueryLog final : public QueryLogStore {
public:
    explicit JsonlQueryLog(std::filesystem::path path, std::chrono::milliseconds fsync_interval = std::chrono::milliseconds(1000));
    ~JsonlQueryLog() override;

    QueryLogEntry append(QueryLogEntry entry) override;
    std::vector<QueryLogEntry> recent(std::size_t limit) const override;
    std::size_t size() const override;
    void flush() override;

    std::size_t skipped_on_replay() const { return skipped_; }

private:
    void writer_loop();

    std::filesystem::path path_;
    std::chrono::milliseconds fsync_interval_;
    std::FILE* file_ = nullptr;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable drained_;
    std::vector<QueryLogEntry> entries_;
    std::deque<std::string> pending_;
    std::size_t in_flight_ = 0;
    std::int64_t last_timestamp_ = 0;
    bool stop_ = false;
    bool fsync_requested_ = false;
    std::size_t skipped_ = 0;
    std::thread writer_;
};

/// Lexicographically sortable 26-character identifiers (48-bit millisecond
/// time + 80 random bits, Crockford base32), monotonic within a process.
class UlidGenerator {
public:
    std::string next();

private:
    std::mutex mu_;
    std::uint64_t last_ms_ = 0;
    std::uint16_t rand_hi_ = 0;
    std::uint64_t rand_lo_ = 0;
};

/// Token bucket per client key. A rate of 0 disables limiting.
class RateLimiter {
public:
    RateLimiter(double per_second, double burst);
    bool allow(const std::string& key);

private:
    struct Bucket {
        double tokens;
        std::chrono::steady_clock::time_point last;
    };
    double rate_;
    double burst_;
    std::mutex mu_;
    std::unordered_map<std::string, Bucket> buckets_;
};

struct ServiceConfig {
    std::string cors_origin = "*";
    double rate_limit = 10.0;  // requests per second per client IP
    int threads = 16;
    std::chrono::milliseconds probe_timeout{1000};
    std::size_t max_query_chars = 2000;
};

struct HttpResult {
    int status = 200;
    std::string body;
};

/// Splits "host:port". Throws InvalidArgument.
std::pair<std::string, int> parse_addr(std::string_view addr);

class Service {
public:
    Service(std::shared_ptr<const modelgw::AnswerPipeline> pipeline, std::shared_ptr<QueryLogStore> log,
            ServiceConfig config = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    HttpResult handle_ask(std::string_view body, const std::string& client);
    HttpResult handle_history(const std::optional<std::string>& limit) const;
    HttpResult handle_health() const;

    /// Binds and serves in the background; returns the bound port.
    int start(const std::string& host, int port);
    /// Stops accepting requests and flushes the log.
    void stop();

private:
    std::shared_ptr<const modelgw::AnswerPipeline> pipeline_;
    std::shared_ptr<QueryLogStore> log_;
    ServiceConfig config_;
    RateLimiter limiter_;
    UlidGenerator ids_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace agriqa::service
