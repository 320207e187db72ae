#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace agriqa::corpus {

enum class Sector { Agriculture, Horticulture, Unknown };
enum class Season { Rabi, Kharif, Jayad, Unknown };
enum class Partition { Train, Validation, Test };

Sector parse_sector(std::string_view s);
Season parse_season(std::string_view s);
const char* to_string(Sector s);
const char* to_string(Season s);
const char* to_string(Partition p);

/// Parses "YYYY-MM-DD" (optionally followed by a time part), "YYYY/MM/DD",
/// "DD-MM-YYYY" and "DD/MM/YYYY". Returns nullopt for anything else.
std::optional<std::chrono::year_month_day> parse_date(std::string_view s);
std::string format_date(const std::chrono::year_month_day& d);

/// One helpline transcript row. Immutable once ingested.
struct QueryRecord {
    std::string id;
    std::string state;
    std::string district;
    Sector sector = Sector::Unknown;
    Season season = Season::Unknown;
    std::string crop;
    std::string query_type;
    std::string query_text;
    std::string expert_answer;
    std::optional<std::chrono::year_month_day> created_on;

    bool operator==(const QueryRecord&) const = default;
};

/// Maps record fields to CSV header names. An empty column name means the
/// field is not present in the export.
struct SchemaMap {
    std::string id;
    std::string state = "StateName";
    std::string district = "DistrictName";
    std::string sector = "Sector";
    std::string season = "Season";
    std::string crop = "Crop";
    std::string query_type = "QueryType";
    std::string query_text = "QueryText";
    std::string expert_answer = "KccAns";
    std::string created_on = "CreatedOn";

    /// Applies `field = column` entries; unknown field names throw.
    static SchemaMap from_entries(const std::map<std::string, std::string>& entries);
};

enum class StratumField { QueryType, Sector, Season, Crop };

struct StratumKey {
    std::vector<StratumField> fields{StratumField::QueryType, StratumField::Sector};

    std::string of(const QueryRecord& r) const;
    std::string describe() const;
    /// Comma separated field names, e.g. "query_type,sector".
    static StratumKey parse(std::string_view list);
};

struct CorpusStats {
    std::size_t total_rows = 0;
    std::size_t record_count = 0;
    std::size_t rejected_row_count = 0;
    std::map<std::string, std::size_t> per_stratum;
    std::map<std::string, std::size_t> rejection_reasons;

    std::string to_json() const;
};

/// Streaming RFC-4180 reader producing validated records. Malformed rows are
/// counted in stats() with a reason and skipped.
class CsvRecordReader {
public:
    CsvRecordReader(const std::filesystem::path& path, SchemaMap schema, StratumKey key = {});

    std::optional<QueryRecord> next();
    const CorpusStats& stats() const { return stats_; }

private:
    enum class RowStatus { Ok, Eof, Malformed };
    RowStatus read_row(std::vector<std::string>& fields, std::string& reason);
    void reject(const std::string& reason);
    std::string field(const std::vector<std::string>& row, int index) const;

    std::ifstream in_;
    SchemaMap schema_;
    StratumKey key_;
    CorpusStats stats_;
    std::size_t header_size_ = 0;
    struct Columns {
        int id = -1, state = -1, district = -1, sector = -1, season = -1, crop = -1,
            query_type = -1, query_text = -1, expert_answer = -1, created_on = -1;
    } cols_;
    std::unordered_set<std::string> seen_ids_;
};

struct IngestResult {
    std::vector<QueryRecord> records;
    CorpusStats stats;
};

/// Reads a whole CSV export. Throws NoData when no row survives validation.
IngestResult ingest_csv(const std::filesystem::path& path, const SchemaMap& schema,
                        const StratumKey& key = {});

struct SplitAssignment {
    std::vector<std::pair<std::string, Partition>> entries;  // input order
    std::uint64_t seed = 0;
    StratumKey key;

    std::optional<Partition> find(std::string_view id) const;
    std::size_t count(Partition p) const;
    std::string to_json() const;
};

/// Seeded per-stratum split. Within each stratum of size n >= 3 the test and
/// validation counts are round-half-up(n * frac); smaller strata go to Train.
SplitAssignment stratified_split(std::span<const QueryRecord> records, double test_frac,
                                 double val_frac, std::uint64_t seed, const StratumKey& key = {});

std::string to_json_line(const QueryRecord& r);
QueryRecord record_from_json_line(std::string_view line);

void write_jsonl(std::span<const QueryRecord> records, const std::filesystem::path& path);
void write_partition(std::span<const QueryRecord> records, const SplitAssignment& assignment,
                     Partition partition, const std::filesystem::path& path);
std::vector<QueryRecord> read_jsonl(const std::filesystem::path& path);

}  // namespace agriqa::corpus
