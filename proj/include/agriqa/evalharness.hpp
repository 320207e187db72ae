#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agriqa/corpus.hpp"
#include "agriqa/metrics.hpp"

namespace agriqa::evalharness {

enum class Attribute { Sector, Season, QueryType };

const char* to_string(Attribute a);
/// Accepts "sector", "season", "query_type" (case-insensitive).
Attribute parse_attribute(std::string_view s);
std::vector<Attribute> parse_attributes(std::string_view comma_list);

/// Subset value of `record` for `attribute`, or nullopt when it is unknown.
std::optional<std::string> subset_of(const corpus::QueryRecord& record, Attribute attribute);

struct AblationPair {
    metrics::EvalPair pair;
    corpus::QueryRecord record;
};

struct AblationRow {
    Attribute attribute;
    std::string subset;
    metrics::MetricReport report;

    bool operator==(const AblationRow&) const = default;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    metrics::MetricReport global;

    bool operator==(const AblationReport&) const = default;
};

inline constexpr std::string_view kOtherSubset = "other";

struct AblationOptions {
    std::size_t min_subset_size = 5;
};

/// One MetricReport per (attribute, subset). Subsets smaller than
/// min_subset_size are pooled into an "other" row, placed last within its
/// attribute; remaining rows are ordered by attribute then subset name.
AblationReport ablate(std::span<const AblationPair> pairs, std::span<const Attribute> attributes,
                      const metrics::FamiliarWords& familiar, const AblationOptions& options = {});

enum class RenderFormat { Json, Table };

std::string render_report(const AblationReport& report, RenderFormat format);
AblationReport report_from_json(std::string_view json);

/// Joins predictions, references and corpus records on id.
std::vector<AblationPair> join_inputs(const std::filesystem::path& predictions,
                                      const std::filesystem::path& references,
                                      const std::filesystem::path& corpus,
                                      const std::optional<std::filesystem::path>& embeddings = std::nullopt);

}  // namespace agriqa::evalharness
