#include "agriqa/agriqa.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "agriqa/config.hpp"
#include "agriqa/corpus.hpp"
#include "agriqa/error.hpp"
#include "agriqa/evalharness.hpp"
#include "agriqa/metrics.hpp"
#include "agriqa/modelgw.hpp"
#include "agriqa/normalize.hpp"
#include "agriqa/service.hpp"

using namespace agriqa;
namespace fs = std::filesystem;

struct agriqa_config {
    Config cfg;
};
struct agriqa_rules {
    std::shared_ptr<const normalize::NormalizationRuleSet> rules;
};
struct agriqa_pipeline {
    std::shared_ptr<const modelgw::AnswerPipeline> pipeline;
};
struct agriqa_service {
    std::unique_ptr<service::Service> svc;
    std::string default_addr;
};
struct agriqa_stub {
    std::unique_ptr<modelgw::StubProviderServer> server;
};

namespace {

thread_local std::string g_last_error;

agriqa_status status_of(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument: return AGRIQA_E_INVALID_ARGUMENT;
        case ErrorCode::Io: return AGRIQA_E_IO;
        case ErrorCode::Parse: return AGRIQA_E_PARSE;
        case ErrorCode::Validation: return AGRIQA_E_VALIDATION;
        case ErrorCode::NoData: return AGRIQA_E_NO_DATA;
        case ErrorCode::ProviderTimeout: return AGRIQA_E_PROVIDER_TIMEOUT;
        case ErrorCode::ProviderStatus: return AGRIQA_E_PROVIDER_STATUS;
        case ErrorCode::ProviderMalformed: return AGRIQA_E_PROVIDER_MALFORMED;
        case ErrorCode::ProviderUnreachable: return AGRIQA_E_PROVIDER_UNREACHABLE;
        case ErrorCode::ProviderEmpty: return AGRIQA_E_PROVIDER_EMPTY;
        case ErrorCode::Network: return AGRIQA_E_NETWORK;
        case ErrorCode::Internal: return AGRIQA_E_INTERNAL;
    }
    return AGRIQA_E_INTERNAL;
}

template <class F>
agriqa_status guard(F&& f) {
    g_last_error.clear();
    try {
        f();
        return AGRIQA_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const nlohmann::json::exception& e) {
        g_last_error = e.what();
        return AGRIQA_E_PARSE;
    } catch (const fs::filesystem_error& e) {
        g_last_error = e.what();
        return AGRIQA_E_IO;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return AGRIQA_E_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return AGRIQA_E_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return AGRIQA_E_INTERNAL;
    }
}

void require(const void* p, const char* what) {
    if (!p) throw Error(ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

void put(char** out, const std::string& s) {
    if (out) *out = dup(s);
}

const Config& config_or_default(const agriqa_config* c) {
    static const Config empty;
    return c ? c->cfg : empty;
}

metrics::FamiliarWords familiar_for(const Config& c) { return metrics::FamiliarWords::load(familiar_words_path(c)); }

std::chrono::system_clock::time_point from_ms(int64_t ms) {
    return std::chrono::system_clock::time_point(std::chrono::milliseconds(ms));
}

}  // namespace

extern "C" {

void agriqa_string_free(char* s) { std::free(s); }

const char* agriqa_version(void) { return agriqa::version(); }

const char* agriqa_status_name(agriqa_status status) {
    switch (status) {
        case AGRIQA_OK: return "ok";
        case AGRIQA_E_INVALID_ARGUMENT: return "invalid_argument";
        case AGRIQA_E_IO: return "io";
        case AGRIQA_E_PARSE: return "parse";
        case AGRIQA_E_VALIDATION: return "validation";
        case AGRIQA_E_NO_DATA: return "no_data";
        case AGRIQA_E_PROVIDER_TIMEOUT: return "provider_timeout";
        case AGRIQA_E_PROVIDER_STATUS: return "provider_status";
        case AGRIQA_E_PROVIDER_MALFORMED: return "provider_malformed";
        case AGRIQA_E_PROVIDER_UNREACHABLE: return "provider_unreachable";
        case AGRIQA_E_PROVIDER_EMPTY: return "provider_empty";
        case AGRIQA_E_NETWORK: return "network";
        case AGRIQA_E_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* agriqa_last_error(void) { return g_last_error.c_str(); }

// config

agriqa_status agriqa_config_new(agriqa_config** out) {
    return guard([&] {
        require(out, "out");
        *out = new agriqa_config{};
    });
}

agriqa_status agriqa_config_load(const char* path, agriqa_config** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        auto c = std::make_unique<agriqa_config>(agriqa_config{Config::load(path)});
        *out = c.release();
    });
}

agriqa_status agriqa_config_set(agriqa_config* cfg, const char* section, const char* key, const char* value) {
    return guard([&] {
        require(cfg, "config");
        require(section, "section");
        require(key, "key");
        require(value, "value");
        cfg->cfg.set(section, key, value);
    });
}

agriqa_status agriqa_config_apply_env(agriqa_config* cfg) {
    return guard([&] {
        require(cfg, "config");
        cfg->cfg.apply_env();
    });
}

agriqa_status agriqa_config_get(const agriqa_config* cfg, const char* section, const char* key, char** out) {
    return guard([&] {
        require(cfg, "config");
        require(section, "section");
        require(key, "key");
        require(out, "out");
        auto v = cfg->cfg.get(section, key);
        *out = v ? dup(*v) : nullptr;
    });
}

const char* agriqa_config_hash(const agriqa_config* cfg) { return cfg ? cfg->cfg.hash().c_str() : ""; }

void agriqa_config_free(agriqa_config* cfg) { delete cfg; }

// stages

agriqa_status agriqa_ingest(const agriqa_config* cfg, const char* csv_path, const char* out_jsonl,
                            char** stats_json) {
    if (stats_json) *stats_json = nullptr;
    return guard([&] {
        require(csv_path, "csv_path");
        require(out_jsonl, "out_jsonl");
        const auto& c = config_or_default(cfg);
        corpus::CsvRecordReader reader(csv_path, schema_map(c), stratum_key(c));
        std::vector<corpus::QueryRecord> records;
        while (auto r = reader.next()) records.push_back(std::move(*r));
        put(stats_json, reader.stats().to_json());
        if (records.empty()) throw Error(ErrorCode::NoData, "no valid rows in " + std::string(csv_path));
        corpus::write_jsonl(records, out_jsonl);
    });
}

agriqa_status agriqa_clean(const agriqa_config* cfg, const char* in_jsonl, const char* rules_dir_path,
                           const char* out_jsonl, const char* flags_path, char** summary_json) {
    return guard([&] {
        require(in_jsonl, "in_jsonl");
        require(out_jsonl, "out_jsonl");
        const auto& c = config_or_default(cfg);
        const auto rules = normalize::NormalizationRuleSet::load(rules_dir_path ? fs::path(rules_dir_path) : rules_dir(c));
        auto records = corpus::read_jsonl(in_jsonl);

        std::size_t changed = 0;
        std::vector<normalize::TextRecord> texts;
        texts.reserve(records.size() * 2);
        for (auto& r : records) {
            auto q = normalize::normalize_text(r.query_text, rules);
            auto a = normalize::normalize_text(r.expert_answer, rules);
            if (q != r.query_text || a != r.expert_answer) ++changed;
            r.query_text = std::move(q);
            r.expert_answer = std::move(a);
            texts.push_back({r.id + "#query_text", r.query_text});
            texts.push_back({r.id + "#expert_answer", r.expert_answer});
        }
        corpus::write_jsonl(records, out_jsonl);

        std::size_t n_flags = 0;
        if (flags_path) {
            normalize::RunOnOptions opt;
            opt.order = static_cast<int>(c.get_int("normalize", "runon_order", opt.order));
            opt.max_token_freq = static_cast<std::size_t>(c.get_int("normalize", "runon_max_token_freq",
                                                                    static_cast<long long>(opt.max_token_freq)));
            opt.min_part_freq = static_cast<std::size_t>(c.get_int("normalize", "runon_min_part_freq",
                                                                   static_cast<long long>(opt.min_part_freq)));
            std::vector<normalize::RunOnFlag> flags;
            if (!texts.empty()) flags = normalize::detect_runons(texts, opt);
            std::ofstream out(flags_path, std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorCode::Io, "cannot write " + std::string(flags_path));
            for (const auto& f : flags) out << normalize::to_json_line(f) << '\n';
            if (!out) throw Error(ErrorCode::Io, "write failed: " + std::string(flags_path));
            n_flags = flags.size();
        }
        nlohmann::ordered_json j{{"records", records.size()}, {"changed", changed}, {"flags", n_flags}};
        put(summary_json, j.dump());
    });
}

agriqa_status agriqa_split(const agriqa_config* cfg, const char* in_jsonl, double test_frac, double val_frac,
                           uint64_t seed, const char* out_dir, char** summary_json) {
    return guard([&] {
        require(in_jsonl, "in_jsonl");
        require(out_dir, "out_dir");
        const auto& c = config_or_default(cfg);
        auto records = corpus::read_jsonl(in_jsonl);
        auto a = corpus::stratified_split(records, test_frac, val_frac, seed, stratum_key(c));
        fs::create_directories(out_dir);
        const fs::path dir(out_dir);
        corpus::write_partition(records, a, corpus::Partition::Train, dir / "train.jsonl");
        corpus::write_partition(records, a, corpus::Partition::Validation, dir / "validation.jsonl");
        corpus::write_partition(records, a, corpus::Partition::Test, dir / "test.jsonl");
        nlohmann::ordered_json j{{"seed", seed},
                                 {"train", a.count(corpus::Partition::Train)},
                                 {"validation", a.count(corpus::Partition::Validation)},
                                 {"test", a.count(corpus::Partition::Test)}};
        put(summary_json, j.dump());
    });
}

agriqa_status agriqa_evaluate(const agriqa_config* cfg, const char* pred_jsonl, const char* ref_jsonl,
                              const char* embeddings, char** report_json) {
    return guard([&] {
        require(pred_jsonl, "pred_jsonl");
        require(ref_jsonl, "ref_jsonl");
        require(report_json, "report_json");
        const auto& c = config_or_default(cfg);
        std::optional<fs::path> emb;
        if (embeddings) emb = embeddings;
        auto report = metrics::evaluate_pairs(pred_jsonl, ref_jsonl, familiar_for(c), emb);
        *report_json = dup(metrics::to_json(report));
    });
}

agriqa_status agriqa_ablate(const agriqa_config* cfg, const char* pred_jsonl, const char* ref_jsonl,
                            const char* corpus_jsonl, const char* by, const char* embeddings,
                            size_t min_subset_size, agriqa_format format, char** out) {
    return guard([&] {
        require(pred_jsonl, "pred_jsonl");
        require(ref_jsonl, "ref_jsonl");
        require(corpus_jsonl, "corpus_jsonl");
        require(out, "out");
        const auto& c = config_or_default(cfg);
        auto attrs = evalharness::parse_attributes(by ? by : "sector,season,query_type");
        std::optional<fs::path> emb;
        if (embeddings) emb = embeddings;
        auto pairs = evalharness::join_inputs(pred_jsonl, ref_jsonl, corpus_jsonl, emb);
        evalharness::AblationOptions opt;
        opt.min_subset_size = min_subset_size
                                  ? min_subset_size
                                  : static_cast<std::size_t>(c.get_int(
                                        "evaluate", "min_subset_size", static_cast<long long>(opt.min_subset_size)));
        auto report = evalharness::ablate(pairs, attrs, familiar_for(c), opt);
        *out = dup(evalharness::render_report(
            report, format == AGRIQA_FORMAT_TABLE ? evalharness::RenderFormat::Table : evalharness::RenderFormat::Json));
    });
}

// normalization

agriqa_status agriqa_rules_load(const char* dir, agriqa_rules** out) {
    return guard([&] {
        require(dir, "dir");
        require(out, "out");
        auto r = std::make_shared<const normalize::NormalizationRuleSet>(normalize::NormalizationRuleSet::load(dir));
        *out = new agriqa_rules{std::move(r)};
    });
}

agriqa_status agriqa_normalize(const agriqa_rules* rules, const char* text, char** out) {
    return guard([&] {
        require(rules, "rules");
        require(text, "text");
        require(out, "out");
        *out = dup(normalize::normalize_text(text, *rules->rules));
    });
}

agriqa_status agriqa_parse_quantities(const agriqa_rules* rules, const char* text, char** out_json) {
    return guard([&] {
        require(rules, "rules");
        require(text, "text");
        require(out_json, "out_json");
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& q : normalize::parse_quantities(text, *rules->rules)) {
            arr.push_back({{"value", q.value},
                           {"literal", q.literal},
                           {"unit", q.unit},
                           {"per_unit", q.per_unit ? nlohmann::ordered_json(*q.per_unit) : nlohmann::ordered_json(nullptr)}});
        }
        *out_json = dup(arr.dump());
    });
}

void agriqa_rules_free(agriqa_rules* rules) { delete rules; }

// answering

agriqa_status agriqa_pipeline_create(const agriqa_config* cfg, agriqa_pipeline** out) {
    return guard([&] {
        require(out, "out");
        const auto& c = config_or_default(cfg);
        auto rules = std::make_shared<const normalize::NormalizationRuleSet>(
            normalize::NormalizationRuleSet::load(rules_dir(c)));
        auto gen = modelgw::make_provider(provider_config(c, "generate"));
        std::shared_ptr<modelgw::Provider> reph;
        auto rc = provider_config(c, "rephrase");
        if (c.get_bool("rephrase", "enabled", true) && !rc.base_url.empty()) reph = modelgw::make_provider(rc);
        *out = new agriqa_pipeline{std::make_shared<const modelgw::AnswerPipeline>(rules, gen, reph)};
    });
}

agriqa_status agriqa_pipeline_ask(const agriqa_pipeline* p, const char* query, int rephrase, char** bundle_json) {
    return guard([&] {
        require(p, "pipeline");
        require(query, "query");
        require(bundle_json, "bundle_json");
        *bundle_json = dup(p->pipeline->answer(query, rephrase != 0).to_json());
    });
}

void agriqa_pipeline_free(agriqa_pipeline* p) { delete p; }

// service

agriqa_status agriqa_service_create(const agriqa_config* cfg, const agriqa_pipeline* p, agriqa_service** out) {
    return guard([&] {
        require(p, "pipeline");
        require(out, "out");
        const auto& c = config_or_default(cfg);
        service::ServiceConfig sc;
        sc.cors_origin = c.get_or("service", "cors_origin", sc.cors_origin);
        sc.rate_limit = c.get_double("service", "rate_limit", sc.rate_limit);
        sc.threads = static_cast<int>(c.get_int("service", "threads", sc.threads));
        sc.max_query_chars =
            static_cast<std::size_t>(c.get_int("service", "max_query_chars", static_cast<long long>(sc.max_query_chars)));
        const auto fsync_ms = c.get_int("service", "fsync_ms", 1000);
        auto log = std::make_shared<service::JsonlQueryLog>(c.get_or("service", "log_path", "agriqa_queries.jsonl"),
                                                            std::chrono::milliseconds(fsync_ms));
        auto s = std::make_unique<agriqa_service>();
        s->svc = std::make_unique<service::Service>(p->pipeline, std::move(log), sc);
        s->default_addr = c.get_or("service", "addr", "127.0.0.1:8080");
        *out = s.release();
    });
}

agriqa_status agriqa_service_start(agriqa_service* s, const char* addr, int* bound_port) {
    return guard([&] {
        require(s, "service");
        auto [host, port] = service::parse_addr(addr ? addr : s->default_addr);
        int bound = s->svc->start(host, port);
        if (bound_port) *bound_port = bound;
    });
}

agriqa_status agriqa_service_stop(agriqa_service* s) {
    return guard([&] {
        require(s, "service");
        s->svc->stop();
    });
}

void agriqa_service_free(agriqa_service* s) { delete s; }

// stub

agriqa_status agriqa_stub_start(const char* fixtures_jsonl, const char* addr, agriqa_stub** out, int* bound_port) {
    return guard([&] {
        require(fixtures_jsonl, "fixtures_jsonl");
        require(out, "out");
        auto [host, port] = service::parse_addr(addr ? addr : "127.0.0.1:0");
        auto s = std::make_unique<agriqa_stub>();
        s->server = std::make_unique<modelgw::StubProviderServer>(modelgw::FixtureProvider::from_file(fixtures_jsonl));
        int bound = s->server->start(host, port);
        if (bound_port) *bound_port = bound;
        *out = s.release();
    });
}

agriqa_status agriqa_stub_set_fault(agriqa_stub* s, agriqa_fault mode, int status, int fail_count) {
    return guard([&] {
        require(s, "stub");
        if (mode < AGRIQA_FAULT_NONE || mode > AGRIQA_FAULT_EMPTY)
            throw Error(ErrorCode::InvalidArgument, "unknown fault mode");
        s->server->set_fault({static_cast<modelgw::FaultMode>(mode), status, fail_count});
    });
}

agriqa_status agriqa_stub_url(const agriqa_stub* s, char** out) {
    return guard([&] {
        require(s, "stub");
        require(out, "out");
        *out = dup(s->server->url());
    });
}

void agriqa_stub_free(agriqa_stub* s) { delete s; }

// manifest

agriqa_status agriqa_manifest_write(const char* path, const char* subcommand, const char* const* inputs,
                                    size_t n_inputs, const char* const* outputs, size_t n_outputs,
                                    const char* config_hash, const uint64_t* seed, int64_t started_ms,
                                    int64_t finished_ms) {
    return guard([&] {
        require(path, "path");
        require(subcommand, "subcommand");
        if (n_inputs) require(inputs, "inputs");
        if (n_outputs) require(outputs, "outputs");
        RunManifest m;
        m.subcommand = subcommand;
        for (size_t i = 0; i < n_inputs; ++i) m.inputs.emplace_back(inputs[i] ? inputs[i] : "");
        for (size_t i = 0; i < n_outputs; ++i) m.outputs.emplace_back(outputs[i] ? outputs[i] : "");
        m.config_hash = config_hash ? config_hash : Config{}.hash();
        if (seed) m.seed = *seed;
        m.tool_version = agriqa::version();
        m.started_at = from_ms(started_ms);
        m.finished_at = from_ms(finished_ms);
        write_manifest(m, path);
    });
}

}  // extern "C"
