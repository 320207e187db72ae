#include "agriqa/service.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <future>
#include <random>

#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "agriqa/error.hpp"
#include "agriqa/text.hpp"

namespace agriqa::service {

using ordered_json = nlohmann::ordered_json;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string dump(const ordered_json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string error_body(std::string_view message) { return dump(ordered_json{{"error", message}}); }

ordered_json opt_json(const std::optional<std::string>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorCode::Validation, std::string("'") + key + "' must be a string");
    return it->get<std::string>();
}

ordered_json request_json(const AskRequest& r) {
    ordered_json j;
    j["query"] = r.query;
    j["rephrase"] = r.rephrase;
    if (r.metadata) {
        j["metadata"] = {{"crop", opt_json(r.metadata->crop)},
                         {"sector", opt_json(r.metadata->sector)},
                         {"season", opt_json(r.metadata->season)}};
    } else {
        j["metadata"] = nullptr;
    }
    return j;
}

ordered_json response_json(const AskResponse& r) {
    ordered_json j;
    j["id"] = r.id;
    j["normalized_query"] = r.normalized_query;
    j["raw_answer"] = r.raw_answer;
    j["rephrased_answer"] = opt_json(r.rephrased_answer);
    j["rephrase_status"] = modelgw::to_string(r.rephrase_status);
    j["timings"] = {{"generate_ms", r.generate_ms},
                    {"rephrase_ms", r.rephrase_ms ? ordered_json(*r.rephrase_ms) : ordered_json(nullptr)}};
    return j;
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

AskRequest AskRequest::parse(std::string_view body, std::size_t max_chars) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::Validation, "request body must be a JSON object");
    AskRequest r;
    auto q = j.find("query");
    if (q == j.end() || !q->is_string()) throw Error(ErrorCode::Validation, "'query' must be a string");
    r.query = q->get<std::string>();
    if (text::trim(r.query).empty()) throw Error(ErrorCode::Validation, "'query' is empty");
    if (text::utf8_length(r.query) > max_chars)
        throw Error(ErrorCode::Validation, "'query' exceeds " + std::to_string(max_chars) + " characters");
    if (auto it = j.find("rephrase"); it != j.end() && !it->is_null()) {
        if (!it->is_boolean()) throw Error(ErrorCode::Validation, "'rephrase' must be a boolean");
        r.rephrase = it->get<bool>();
    }
    if (auto it = j.find("metadata"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw Error(ErrorCode::Validation, "'metadata' must be an object");
        r.metadata = QueryMetadata{opt_string(*it, "crop"), opt_string(*it, "sector"), opt_string(*it, "season")};
    }
    return r;
}

std::string to_json(const AskResponse& r) { return dump(response_json(r)); }

std::string to_json(const QueryLogEntry& e) {
    ordered_json j;
    j["timestamp_ms"] = e.timestamp_ms;
    j["request"] = request_json(e.request);
    j["response"] = response_json(e.response);
    j["models"] = {{"generate", e.generate_model}, {"rephrase", e.rephrase_model}};
    return dump(j);
}

QueryLogEntry entry_from_json(std::string_view line) {
    try {
        auto j = json::parse(line);
        QueryLogEntry e;
        e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        e.request = AskRequest::parse(j.at("request").dump(), std::numeric_limits<std::size_t>::max());
        const auto& r = j.at("response");
        e.response.id = r.at("id").get<std::string>();
        e.response.normalized_query = r.at("normalized_query").get<std::string>();
        e.response.raw_answer = r.at("raw_answer").get<std::string>();
        e.response.rephrased_answer = opt_string(r, "rephrased_answer");
        e.response.rephrase_status = modelgw::parse_rephrase_status(r.at("rephrase_status").get<std::string>());
        e.response.generate_ms = r.at("timings").at("generate_ms").get<long long>();
        if (!r.at("timings").at("rephrase_ms").is_null())
            e.response.rephrase_ms = r.at("timings").at("rephrase_ms").get<long long>();
        e.generate_model = j.at("models").at("generate").get<std::string>();
        e.rephrase_model = j.at("models").at("rephrase").get<std::string>();
        return e;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::Parse, std::string("invalid log entry: ") + ex.what());
    }
}

// ---------------------------------------------------------------------------
// JsonlQueryLog

JsonlQueryLog::JsonlQueryLog(fs::path path, std::chrono::milliseconds fsync_interval)
    : path_(std::move(path)), fsync_interval_(fsync_interval) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    if (fs::exists(path_)) {
        std::ifstream in(path_, std::ios::binary);
        std::string line;
        while (std::getline(in, line)) {
            if (text::trim(line).empty()) continue;
            try {
                entries_.push_back(entry_from_json(line));
                last_timestamp_ = std::max(last_timestamp_, entries_.back().timestamp_ms);
            } catch (const Error&) {
                ++skipped_;  // torn tail after a crash
            }
        }
    }
    file_ = std::fopen(path_.c_str(), "ab");
    if (!file_) throw Error(ErrorCode::Io, "cannot open query log " + path_.string());
    writer_ = std::thread([this] { writer_loop(); });
}

JsonlQueryLog::~JsonlQueryLog() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    if (writer_.joinable()) writer_.join();
    if (file_) std::fclose(file_);
}

QueryLogEntry JsonlQueryLog::append(QueryLogEntry entry) {
    std::lock_guard lock(mu_);
    entry.timestamp_ms = std::max(now_ms(), last_timestamp_);
    last_timestamp_ = entry.timestamp_ms;
    pending_.push_back(to_json(entry));
    entries_.push_back(entry);
    cv_.notify_one();
    return entry;
}

std::vector<QueryLogEntry> JsonlQueryLog::recent(std::size_t limit) const {
    std::lock_guard lock(mu_);
    const auto n = std::min(limit, entries_.size());
    return {entries_.rbegin(), entries_.rbegin() + static_cast<std::ptrdiff_t>(n)};
}

std::size_t JsonlQueryLog::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

void JsonlQueryLog::flush() {
    std::unique_lock lock(mu_);
    fsync_requested_ = true;
    cv_.notify_one();
    drained_.wait(lock, [this] { return (pending_.empty() && in_flight_ == 0 && !fsync_requested_) || stop_; });
}

void JsonlQueryLog::writer_loop() {
    auto last_sync = std::chrono::steady_clock::now();
    bool dirty = false;
    std::unique_lock lock(mu_);
    for (;;) {
        cv_.wait_for(lock, fsync_interval_, [this] { return stop_ || fsync_requested_ || !pending_.empty(); });
        std::deque<std::string> batch;
        batch.swap(pending_);
        in_flight_ = batch.size();
        const bool sync_now = fsync_requested_ || stop_;
        lock.unlock();

        for (const auto& line : batch) {
            std::fwrite(line.data(), 1, line.size(), file_);
            std::fputc('\n', file_);
        }
        if (!batch.empty()) {
            std::fflush(file_);
            dirty = true;
        }
        const auto now = std::chrono::steady_clock::now();
        if (dirty && (sync_now || now - last_sync >= fsync_interval_)) {
            ::fsync(::fileno(file_));
            dirty = false;
            last_sync = now;
        }

        lock.lock();
        in_flight_ = 0;
        if (sync_now && pending_.empty()) fsync_requested_ = false;
        drained_.notify_all();
        if (stop_ && pending_.empty()) break;
    }
}

// ---------------------------------------------------------------------------

std::string UlidGenerator::next() {
    static constexpr char alphabet[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uint64_t ms = static_cast<std::uint64_t>(now_ms());
    std::uint16_t hi;
    std::uint64_t lo;
    {
        std::lock_guard lock(mu_);
        if (ms <= last_ms_) {
            ms = last_ms_;
            if (++rand_lo_ == 0) ++rand_hi_;
        } else {
            last_ms_ = ms;
            rand_lo_ = rng();
            rand_hi_ = static_cast<std::uint16_t>(rng());
        }
        hi = rand_hi_;
        lo = rand_lo_;
    }
    unsigned __int128 v = (static_cast<unsigned __int128>(ms & 0xFFFFFFFFFFFFULL) << 80) |
                          (static_cast<unsigned __int128>(hi) << 64) | lo;
    std::string out(26, '0');
    for (int i = 25; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = alphabet[static_cast<unsigned>(v & 31)];
        v >>= 5;
    }
    return out;
}

RateLimiter::RateLimiter(double per_second, double burst) : rate_(per_second), burst_(std::max(burst, 1.0)) {}

bool RateLimiter::allow(const std::string& key) {
    if (rate_ <= 0) return true;
    const auto now = std::chrono::steady_clock::now();
    std::lock_guard lock(mu_);
    auto [it, inserted] = buckets_.try_emplace(key, Bucket{burst_, now});
    auto& b = it->second;
    if (!inserted) {
        const double elapsed = std::chrono::duration<double>(now - b.last).count();
        b.tokens = std::min(burst_, b.tokens + elapsed * rate_);
        b.last = now;
    }
    if (b.tokens < 1.0) return false;
    b.tokens -= 1.0;
    return true;
}

std::pair<std::string, int> parse_addr(std::string_view addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string_view::npos || colon == 0)
        throw Error(ErrorCode::InvalidArgument, "address must be host:port, got '" + std::string(addr) + "'");
    int port = -1;
    auto ps = addr.substr(colon + 1);
    auto [p, ec] = std::from_chars(ps.data(), ps.data() + ps.size(), port);
    if (ec != std::errc{} || p != ps.data() + ps.size() || port < 0 || port > 65535)
        throw Error(ErrorCode::InvalidArgument, "invalid port in '" + std::string(addr) + "'");
    return {std::string(addr.substr(0, colon)), port};
}

// ---------------------------------------------------------------------------
// Service

Service::Service(std::shared_ptr<const modelgw::AnswerPipeline> pipeline, std::shared_ptr<QueryLogStore> log,
                 ServiceConfig config)
    : pipeline_(std::move(pipeline)),
      log_(std::move(log)),
      config_(std::move(config)),
      limiter_(config_.rate_limit, config_.rate_limit) {
    if (!pipeline_ || !log_) throw Error(ErrorCode::InvalidArgument, "service needs a pipeline and a log");
}

Service::~Service() { stop(); }

HttpResult Service::handle_ask(std::string_view body, const std::string& client) {
    if (!limiter_.allow(client)) return {429, error_body("rate limit exceeded")};
    AskRequest req;
    try {
        req = AskRequest::parse(body, config_.max_query_chars);
    } catch (const Error& e) {
        return {400, error_body(e.what())};
    }
    modelgw::AnswerBundle bundle;
    try {
        bundle = pipeline_->answer(req.query, req.rephrase);
    } catch (const modelgw::ProviderError& e) {
        return {502, error_body(std::string("generation provider failed: ") + e.what())};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) return {400, error_body(e.what())};
        return {500, error_body(e.what())};
    } catch (const std::exception& e) {
        return {500, error_body(e.what())};
    }

    QueryLogEntry entry;
    entry.request = req;
    auto& resp = entry.response;
    resp.id = ids_.next();
    resp.normalized_query = bundle.query_normalized;
    resp.raw_answer = bundle.raw_answer;
    resp.rephrased_answer = bundle.rephrased_answer;
    resp.rephrase_status = bundle.rephrase_status;
    resp.generate_ms = bundle.latency_generate.count();
    if (bundle.latency_rephrase) resp.rephrase_ms = bundle.latency_rephrase->count();
    entry.generate_model = pipeline_->generator().model_name();
    entry.rephrase_model = pipeline_->rephraser() ? pipeline_->rephraser()->model_name() : "";
    log_->append(entry);
    return {200, to_json(resp)};
}

HttpResult Service::handle_history(const std::optional<std::string>& limit) const {
    long long n = 20;
    if (limit) {
        auto t = text::trim(*limit);
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
        if (t.empty() || ec != std::errc{} || p != t.data() + t.size())
            return {400, error_body("limit must be an integer in 1..1000")};
    }
    if (n < 1 || n > 1000) return {400, error_body("limit must be an integer in 1..1000")};
    ordered_json arr = ordered_json::array();
    for (const auto& e : log_->recent(static_cast<std::size_t>(n))) arr.push_back(ordered_json::parse(to_json(e)));
    return {200, dump(arr)};
}

HttpResult Service::handle_health() const {
    auto gen = std::async(std::launch::async, [this] { return pipeline_->generator().probe(config_.probe_timeout); });
    std::optional<bool> reph;
    if (const auto* r = pipeline_->rephraser()) reph = r->probe(config_.probe_timeout);
    const bool gen_ok = gen.get();
    std::string status;
    if (!gen_ok) status = "down";
    else if (reph && !*reph) status = "degraded";
    else status = "ok";
    ordered_json j;
    j["status"] = status;
    j["providers"] = {{"generate", gen_ok ? "ok" : "down"},
                      {"rephrase", !reph ? "disabled" : (*reph ? "ok" : "down")}};
    return {200, dump(j)};
}

int Service::start(const std::string& host, int port) {
    server_ = std::make_unique<httplib::Server>();
    const int threads = std::max(1, config_.threads);
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    server_->set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin}});

    auto reply = [](httplib::Response& res, const HttpResult& r) {
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };
    server_->Post("/v1/ask", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, handle_ask(req.body, req.remote_addr));
    });
    server_->Get("/v1/history", [this, reply](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string> limit;
        if (req.has_param("limit")) limit = req.get_param_value("limit");
        reply(res, handle_history(limit));
    });
    server_->Get("/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, handle_health());
    });
    server_->Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.status = 204;
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });

    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        server_.reset();
        throw Error(ErrorCode::Network, "cannot bind " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Service::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
    if (log_) log_->flush();
}

}  // namespace agriqa::service
