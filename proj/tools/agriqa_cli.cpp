// agriqa: one binary, one subcommand per pipeline stage.

#include <agriqa/agriqa.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

struct CString {
    char* p = nullptr;
    ~CString() { agriqa_string_free(p); }
    std::string str() const { return p ? p : ""; }
};

struct ConfigHandle {
    agriqa_config* p = nullptr;
    ~ConfigHandle() { agriqa_config_free(p); }
};

struct Failure {
    int code;
};

void check(agriqa_status st, const std::string& what) {
    if (st == AGRIQA_OK) return;
    std::cerr << "agriqa: " << what << ": " << agriqa_last_error() << " (" << agriqa_status_name(st) << ")\n";
    throw Failure{kExitFailure};
}

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;  // section.key=value
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config_path, "config file ([section] key = value)")->check(CLI::ExistingFile);
    sub->add_option("--set", c.overrides, "override a config value: section.key=value");
}

// file < flags < environment
void open_config(const Common& c, ConfigHandle& h,
                 const std::vector<std::tuple<std::string, std::string, std::string>>& flag_values = {}) {
    if (c.config_path.empty()) check(agriqa_config_new(&h.p), "config");
    else check(agriqa_config_load(c.config_path.c_str(), &h.p), "config " + c.config_path);
    for (const auto& o : c.overrides) {
        auto eq = o.find('=');
        auto dot = o.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
            std::cerr << "agriqa: --set expects section.key=value, got '" << o << "'\n";
            throw Failure{kExitUsage};
        }
        check(agriqa_config_set(h.p, o.substr(0, dot).c_str(), o.substr(dot + 1, eq - dot - 1).c_str(),
                                o.substr(eq + 1).c_str()),
              "--set");
    }
    for (const auto& [s, k, v] : flag_values) check(agriqa_config_set(h.p, s.c_str(), k.c_str(), v.c_str()), "flag");
    check(agriqa_config_apply_env(h.p), "environment");
}

void manifest(const std::string& path, const char* sub, const std::vector<std::string>& in,
              const std::vector<std::string>& out, const ConfigHandle& cfg, const uint64_t* seed, int64_t started) {
    std::vector<const char*> ip, op;
    for (const auto& s : in) ip.push_back(s.c_str());
    for (const auto& s : out) op.push_back(s.c_str());
    check(agriqa_manifest_write(path.c_str(), sub, ip.data(), ip.size(), op.data(), op.size(),
                                agriqa_config_hash(cfg.p), seed, started, now_ms()),
          "manifest");
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) {
        std::cerr << "agriqa: cannot write " << path << "\n";
        throw Failure{kExitFailure};
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Agricultural helpline QA: corpus preparation, evaluation and answering", "agriqa"};
    app.set_version_flag("--version", std::string("agriqa ") + agriqa_version());
    app.require_subcommand(1);

    // ingest
    Common ingest_c;
    std::string ingest_in, ingest_out;
    auto* ingest = app.add_subcommand("ingest", "CSV export -> JSONL corpus plus stats");
    add_common(ingest, ingest_c);
    ingest->add_option("--input", ingest_in, "CSV file")->required();
    ingest->add_option("--out", ingest_out, "JSONL output")->required();

    // clean
    Common clean_c;
    std::string clean_in, clean_rules, clean_out, clean_flags;
    auto* clean = app.add_subcommand("clean", "normalize a JSONL corpus and flag run-on tokens");
    add_common(clean, clean_c);
    clean->add_option("--in", clean_in, "JSONL corpus")->required();
    clean->add_option("--rules", clean_rules, "rules directory (default: configured)");
    clean->add_option("--out", clean_out, "normalized JSONL output")->required();
    clean->add_option("--flags", clean_flags, "run-on flags JSONL output");

    // split
    Common split_c;
    std::string split_in, split_out;
    double split_test = 0.01, split_val = 0.01;
    uint64_t seed = 0;
    auto* split = app.add_subcommand("split", "seeded stratified train/validation/test split");
    add_common(split, split_c);
    split->add_option("--in", split_in, "JSONL corpus")->required();
    split->add_option("--test", split_test, "test fraction")->capture_default_str();
    split->add_option("--val", split_val, "validation fraction")->capture_default_str();
    split->add_option("--seed", seed, "64-bit seed")->required();
    split->add_option("--out-dir", split_out, "output directory (default: next to --in)");

    // evaluate
    Common eval_c;
    std::string eval_pred, eval_ref, eval_emb, eval_out = "report.json";
    auto* evaluate = app.add_subcommand("evaluate", "BLEU, ROUGE-1, BERTScore and readability");
    add_common(evaluate, eval_c);
    evaluate->add_option("--pred", eval_pred, "predictions JSONL {id, text}")->required();
    evaluate->add_option("--ref", eval_ref, "references JSONL {id, text}")->required();
    evaluate->add_option("--embeddings", eval_emb, "token embeddings JSONL");
    evaluate->add_option("--out", eval_out, "report path")->capture_default_str();

    // ablate
    Common abl_c;
    std::string abl_pred, abl_ref, abl_corpus, abl_by = "sector,season,query_type", abl_emb, abl_out,
                                                 abl_format = "table";
    std::size_t abl_min = 0;
    auto* ablate = app.add_subcommand("ablate", "per-subset metrics by metadata attribute");
    add_common(ablate, abl_c);
    ablate->add_option("--pred", abl_pred, "predictions JSONL")->required();
    ablate->add_option("--ref", abl_ref, "references JSONL")->required();
    ablate->add_option("--corpus", abl_corpus, "corpus JSONL carrying the metadata")->required();
    ablate->add_option("--by", abl_by, "attributes")->capture_default_str();
    ablate->add_option("--embeddings", abl_emb, "token embeddings JSONL");
    ablate->add_option("--format", abl_format, "json or table")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();
    ablate->add_option("--min-subset", abl_min, "pool smaller subsets into 'other'");
    ablate->add_option("--out", abl_out, "write the report here as well as to stdout");

    // serve
    Common serve_c;
    std::string serve_addr;
    auto* serve = app.add_subcommand("serve", "run the HTTP answering service");
    add_common(serve, serve_c);
    serve->add_option("--addr", serve_addr, "listen address host:port");

    // ask
    Common ask_c;
    std::string ask_query, ask_manifest;
    bool no_rephrase = false;
    auto* ask = app.add_subcommand("ask", "answer one query and print the bundle");
    add_common(ask, ask_c);
    ask->add_option("--query", ask_query, "farmer query")->required();
    ask->add_flag("--no-rephrase", no_rephrase, "skip the rephrasing provider");
    ask->add_option("--manifest", ask_manifest, "write a run manifest here");

    // stub
    std::string stub_fixtures, stub_addr = "127.0.0.1:0";
    auto* stub = app.add_subcommand("stub", "serve a fixture-backed provider for local testing");
    stub->add_option("--fixtures", stub_fixtures, "{input, output} JSONL")->required()->check(CLI::ExistingFile);
    stub->add_option("--addr", stub_addr, "listen address host:port")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    const int64_t started = now_ms();
    try {
        if (*ingest) {
            ConfigHandle cfg;
            open_config(ingest_c, cfg);
            CString stats;
            auto st = agriqa_ingest(cfg.p, ingest_in.c_str(), ingest_out.c_str(), &stats.p);
            if (stats.p) std::cout << stats.str() << "\n";
            check(st, "ingest");
            manifest(ingest_out + ".manifest.json", "ingest", {ingest_in}, {ingest_out}, cfg, nullptr, started);
        } else if (*clean) {
            ConfigHandle cfg;
            open_config(clean_c, cfg);
            CString summary;
            check(agriqa_clean(cfg.p, clean_in.c_str(), clean_rules.empty() ? nullptr : clean_rules.c_str(),
                               clean_out.c_str(), clean_flags.empty() ? nullptr : clean_flags.c_str(), &summary.p),
                  "clean");
            std::cout << summary.str() << "\n";
            std::vector<std::string> ins{clean_in}, outs{clean_out};
            if (!clean_rules.empty()) ins.push_back(clean_rules);
            if (!clean_flags.empty()) outs.push_back(clean_flags);
            manifest(clean_out + ".manifest.json", "clean", ins, outs, cfg, nullptr, started);
        } else if (*split) {
            ConfigHandle cfg;
            open_config(split_c, cfg);
            if (split_out.empty()) {
                auto slash = split_in.find_last_of('/');
                split_out = slash == std::string::npos ? "." : split_in.substr(0, slash);
                if (split_out.empty()) split_out = "/";
            }
            CString summary;
            check(agriqa_split(cfg.p, split_in.c_str(), split_test, split_val, seed, split_out.c_str(), &summary.p),
                  "split");
            std::cout << summary.str() << "\n";
            manifest(split_out + "/manifest.json", "split", {split_in},
                     {split_out + "/train.jsonl", split_out + "/validation.jsonl", split_out + "/test.jsonl"}, cfg,
                     &seed, started);
        } else if (*evaluate) {
            ConfigHandle cfg;
            open_config(eval_c, cfg);
            CString report;
            check(agriqa_evaluate(cfg.p, eval_pred.c_str(), eval_ref.c_str(),
                                  eval_emb.empty() ? nullptr : eval_emb.c_str(), &report.p),
                  "evaluate");
            write_file(eval_out, report.str() + "\n");
            std::cout << report.str() << "\n";
            std::vector<std::string> ins{eval_pred, eval_ref};
            if (!eval_emb.empty()) ins.push_back(eval_emb);
            manifest(eval_out + ".manifest.json", "evaluate", ins, {eval_out}, cfg, nullptr, started);
        } else if (*ablate) {
            ConfigHandle cfg;
            open_config(abl_c, cfg);
            CString out;
            check(agriqa_ablate(cfg.p, abl_pred.c_str(), abl_ref.c_str(), abl_corpus.c_str(), abl_by.c_str(),
                                abl_emb.empty() ? nullptr : abl_emb.c_str(), abl_min,
                                abl_format == "json" ? AGRIQA_FORMAT_JSON : AGRIQA_FORMAT_TABLE, &out.p),
                  "ablate");
            std::cout << out.str();
            if (abl_format == "json") std::cout << "\n";
            const std::string target = abl_out.empty() ? std::string("ablation.") + abl_format : abl_out;
            if (!abl_out.empty()) write_file(abl_out, out.str() + (abl_format == "json" ? "\n" : ""));
            std::vector<std::string> ins{abl_pred, abl_ref, abl_corpus};
            if (!abl_emb.empty()) ins.push_back(abl_emb);
            std::vector<std::string> outs;
            if (!abl_out.empty()) outs.push_back(abl_out);
            manifest(target + ".manifest.json", "ablate", ins, outs, cfg, nullptr, started);
        } else if (*serve) {
            // Block the stop signals before any thread starts so sigwait sees them.
            sigset_t stop_signals;
            sigemptyset(&stop_signals);
            sigaddset(&stop_signals, SIGINT);
            sigaddset(&stop_signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

            ConfigHandle cfg;
            std::vector<std::tuple<std::string, std::string, std::string>> flags;
            if (!serve_addr.empty()) flags.emplace_back("service", "addr", serve_addr);
            open_config(serve_c, cfg, flags);

            agriqa_pipeline* pipeline = nullptr;
            check(agriqa_pipeline_create(cfg.p, &pipeline), "pipeline");
            std::unique_ptr<agriqa_pipeline, decltype(&agriqa_pipeline_free)> pipeline_guard(pipeline,
                                                                                             agriqa_pipeline_free);
            agriqa_service* svc = nullptr;
            check(agriqa_service_create(cfg.p, pipeline, &svc), "service");
            std::unique_ptr<agriqa_service, decltype(&agriqa_service_free)> svc_guard(svc, agriqa_service_free);
            int port = 0;
            check(agriqa_service_start(svc, nullptr, &port), "listen");
            CString addr;
            check(agriqa_config_get(cfg.p, "service", "addr", &addr.p), "config");
            std::string shown = addr.p ? addr.str() : "127.0.0.1:8080";
            shown = shown.substr(0, shown.rfind(':')) + ":" + std::to_string(port);
            std::cout << "listening on " << shown << std::endl;

            int sig = 0;
            sigwait(&stop_signals, &sig);
            std::cerr << "agriqa: signal " << sig << ", shutting down\n";
            check(agriqa_service_stop(svc), "stop");

            CString log_path;
            check(agriqa_config_get(cfg.p, "service", "log_path", &log_path.p), "config");
            const std::string log = log_path.p ? log_path.str() : "agriqa_queries.jsonl";
            std::vector<std::string> ins;
            if (!serve_c.config_path.empty()) ins.push_back(serve_c.config_path);
            manifest(log + ".manifest.json", "serve", ins, {log}, cfg, nullptr, started);
        } else if (*ask) {
            if (ask_query.find_first_not_of(" \t\r\n") == std::string::npos) {
                std::cerr << "agriqa ask: --query must not be empty\n" << ask->help();
                return kExitUsage;
            }
            ConfigHandle cfg;
            open_config(ask_c, cfg);
            agriqa_pipeline* pipeline = nullptr;
            check(agriqa_pipeline_create(cfg.p, &pipeline), "pipeline");
            std::unique_ptr<agriqa_pipeline, decltype(&agriqa_pipeline_free)> guard(pipeline, agriqa_pipeline_free);
            CString bundle;
            check(agriqa_pipeline_ask(pipeline, ask_query.c_str(), no_rephrase ? 0 : 1, &bundle.p), "ask");
            std::cout << bundle.str() << "\n";
            if (!ask_manifest.empty()) {
                std::vector<std::string> ins;
                if (!ask_c.config_path.empty()) ins.push_back(ask_c.config_path);
                manifest(ask_manifest, "ask", ins, {}, cfg, nullptr, started);
            }
        } else if (*stub) {
            sigset_t stop_signals;
            sigemptyset(&stop_signals);
            sigaddset(&stop_signals, SIGINT);
            sigaddset(&stop_signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

            agriqa_stub* s = nullptr;
            int port = 0;
            check(agriqa_stub_start(stub_fixtures.c_str(), stub_addr.c_str(), &s, &port), "stub");
            std::unique_ptr<agriqa_stub, decltype(&agriqa_stub_free)> guard(s, agriqa_stub_free);
            CString url;
            check(agriqa_stub_url(s, &url.p), "stub");
            std::cout << url.str() << std::endl;
            int sig = 0;
            sigwait(&stop_signals, &sig);
        }
    } catch (const Failure& f) {
        return f.code;
    }
    return 0;
}
