#include "agriqa/evalharness.hpp"

#include <algorithm>
#include <future>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "agriqa/error.hpp"
#include "agriqa/text.hpp"

namespace agriqa::evalharness {

using ordered_json = nlohmann::ordered_json;

const char* to_string(Attribute a) {
    switch (a) {
        case Attribute::Sector: return "Sector";
        case Attribute::Season: return "Season";
        case Attribute::QueryType: return "Query Type";
    }
    return "?";
}

Attribute parse_attribute(std::string_view s) {
    auto t = text::to_lower(text::trim(s));
    if (t == "sector") return Attribute::Sector;
    if (t == "season") return Attribute::Season;
    if (t == "query_type" || t == "querytype" || t == "query type") return Attribute::QueryType;
    throw Error(ErrorCode::InvalidArgument, "unknown ablation attribute: '" + std::string(s) + "'");
}

std::vector<Attribute> parse_attributes(std::string_view list) {
    std::vector<Attribute> out;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        auto comma = list.find(',', pos);
        if (comma == std::string_view::npos) comma = list.size();
        auto a = parse_attribute(list.substr(pos, comma - pos));
        if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
        pos = comma + 1;
    }
    return out;
}

std::optional<std::string> subset_of(const corpus::QueryRecord& r, Attribute a) {
    switch (a) {
        case Attribute::Sector:
            if (r.sector == corpus::Sector::Unknown) return std::nullopt;
            return corpus::to_string(r.sector);
        case Attribute::Season:
            if (r.season == corpus::Season::Unknown) return std::nullopt;
            return corpus::to_string(r.season);
        case Attribute::QueryType: {
            auto t = std::string(text::trim(r.query_type));
            if (t.empty() || text::to_lower(t) == "unknown") return std::nullopt;
            return t;
        }
    }
    return std::nullopt;
}

namespace {

metrics::MetricReport evaluate_subset(std::span<const AblationPair> all, const std::vector<std::size_t>& idx,
                                      const metrics::FamiliarWords& familiar) {
    std::vector<metrics::EvalPair> pairs;
    pairs.reserve(idx.size());
    for (auto i : idx) pairs.push_back(all[i].pair);
    return metrics::evaluate(pairs, familiar);
}

}  // namespace

AblationReport ablate(std::span<const AblationPair> pairs, std::span<const Attribute> attributes,
                      const metrics::FamiliarWords& familiar, const AblationOptions& options) {
    if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "ablation needs at least one pair");
    if (attributes.empty()) throw Error(ErrorCode::InvalidArgument, "ablation needs at least one attribute");

    std::vector<Attribute> attrs(attributes.begin(), attributes.end());
    std::sort(attrs.begin(), attrs.end());
    attrs.erase(std::unique(attrs.begin(), attrs.end()), attrs.end());

    struct Job {
        Attribute attribute;
        std::string subset;
        std::vector<std::size_t> members;
    };
    std::vector<Job> jobs;
    for (auto a : attrs) {
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (auto s = subset_of(pairs[i].record, a)) groups[*s].push_back(i);
        }
        std::vector<std::size_t> other;
        for (auto& [name, members] : groups) {
            if (members.size() < options.min_subset_size) {
                other.insert(other.end(), members.begin(), members.end());
            } else {
                jobs.push_back({a, name, std::move(members)});
            }
        }
        if (!other.empty()) {
            std::sort(other.begin(), other.end());
            jobs.push_back({a, std::string(kOtherSubset), std::move(other)});
        }
    }

    std::vector<std::future<metrics::MetricReport>> futures;
    futures.reserve(jobs.size());
    for (const auto& job : jobs) {
        futures.push_back(std::async(std::launch::async, [&pairs, &job, &familiar] {
            return evaluate_subset(pairs, job.members, familiar);
        }));
    }

    AblationReport report;
    std::vector<std::size_t> everything(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) everything[i] = i;
    report.global = evaluate_subset(pairs, everything, familiar);
    for (std::size_t k = 0; k < jobs.size(); ++k)
        report.rows.push_back({jobs[k].attribute, jobs[k].subset, futures[k].get()});
    return report;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

const char* attribute_key(Attribute a) {
    switch (a) {
        case Attribute::Sector: return "sector";
        case Attribute::Season: return "season";
        case Attribute::QueryType: return "query_type";
    }
    return "?";
}

std::string cell(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

}  // namespace

std::string render_report(const AblationReport& report, RenderFormat format) {
    if (format == RenderFormat::Json) {
        ordered_json j;
        j["global"] = ordered_json::parse(metrics::to_json(report.global));
        ordered_json rows = ordered_json::array();
        for (const auto& r : report.rows) {
            rows.push_back({{"attribute", attribute_key(r.attribute)},
                            {"subset", r.subset},
                            {"report", ordered_json::parse(metrics::to_json(r.report))}});
        }
        j["rows"] = std::move(rows);
        return j.dump(2) + "\n";
    }

    const std::vector<std::string> header{"Meta Data", "Subset", "Bleu Score", "Rouge1", "Precision", "Recall", "F1 Score"};
    std::vector<std::vector<std::string>> body;
    std::vector<bool> group_start;
    std::optional<Attribute> last;
    for (const auto& r : report.rows) {
        const bool first = !last || *last != r.attribute;
        last = r.attribute;
        group_start.push_back(first);
        const auto& b = r.report.bertscore;
        body.push_back({first ? to_string(r.attribute) : "", r.subset, cell(r.report.bleu), cell(r.report.rouge1.f1),
                        b ? cell(b->precision) : "-", b ? cell(b->recall) : "-", b ? cell(b->f1) : "-"});
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : body) width[c] = std::max(width[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& cols) {
        std::string s;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) s += "  ";
            s += cols[c];
            if (c + 1 < cols.size()) s.append(width[c] - cols[c].size(), ' ');
        }
        return s + "\n";
    };
    std::size_t total = 0;
    for (auto w : width) total += w;
    const std::string rule(total + 2 * (width.size() - 1), '-');
    std::string out = line(header) + rule + "\n";
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (group_start[i] && i > 0) out += rule + "\n";
        out += line(body[i]);
    }
    return out;
}

AblationReport report_from_json(std::string_view json) {
    try {
        auto j = ordered_json::parse(json);
        AblationReport r;
        r.global = metrics::report_from_json(j.at("global").dump());
        for (const auto& row : j.at("rows")) {
            r.rows.push_back({parse_attribute(row.at("attribute").get<std::string>()), row.at("subset").get<std::string>(),
                              metrics::report_from_json(row.at("report").dump())});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("invalid ablation report: ") + e.what());
    }
}

std::vector<AblationPair> join_inputs(const std::filesystem::path& predictions, const std::filesystem::path& references,
                                      const std::filesystem::path& corpus_path,
                                      const std::optional<std::filesystem::path>& embeddings) {
    const auto preds = metrics::read_id_text_jsonl(predictions);
    const auto refs = metrics::read_id_text_jsonl(references);
    auto pairs = metrics::align_pairs(preds, refs);
    if (embeddings) metrics::attach_embeddings(pairs, metrics::load_embeddings(*embeddings));
    const auto records = corpus::read_jsonl(corpus_path);
    std::unordered_map<std::string, const corpus::QueryRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.id, &r);
    std::vector<AblationPair> out;
    out.reserve(pairs.size());
    for (auto& p : pairs) {
        auto it = by_id.find(p.id);
        if (it == by_id.end()) throw Error(ErrorCode::Validation, "no corpus record for id: " + p.id);
        out.push_back({std::move(p), *it->second});
    }
    return out;
}

}  // namespace agriqa::evalharness
