#include "agriqa/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "agriqa/error.hpp"
#include "agriqa/text.hpp"

namespace agriqa::corpus {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && text::to_lower(a) == text::to_lower(b);
}

std::optional<int> parse_int(std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Unbiased draw in [0, n). std::uniform_int_distribution is not specified
// bit-for-bit across standard libraries, the engine output is.
std::uint64_t bounded(std::mt19937_64& eng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = eng();
        if (r >= threshold) return r % n;
    }
}

std::size_t round_half_up(std::size_t n, double frac) {
    // The epsilon keeps products like 150 * 0.01 = 1.4999999999999998 on the
    // intended side of the .5 boundary.
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 0.5 + 1e-9));
}

const char* field_name(StratumField f) {
    switch (f) {
        case StratumField::QueryType: return "query_type";
        case StratumField::Sector: return "sector";
        case StratumField::Season: return "season";
        case StratumField::Crop: return "crop";
    }
    return "?";
}

}  // namespace

Sector parse_sector(std::string_view s) {
    auto t = text::to_lower(text::trim(s));
    if (t == "agriculture") return Sector::Agriculture;
    if (t == "horticulture") return Sector::Horticulture;
    return Sector::Unknown;
}

Season parse_season(std::string_view s) {
    auto t = text::to_lower(text::trim(s));
    if (t == "rabi") return Season::Rabi;
    if (t == "kharif") return Season::Kharif;
    if (t == "jayad" || t == "zaid" || t == "zayad") return Season::Jayad;
    return Season::Unknown;
}

const char* to_string(Sector s) {
    switch (s) {
        case Sector::Agriculture: return "Agriculture";
        case Sector::Horticulture: return "Horticulture";
        case Sector::Unknown: return "Unknown";
    }
    return "Unknown";
}

const char* to_string(Season s) {
    switch (s) {
        case Season::Rabi: return "Rabi";
        case Season::Kharif: return "Kharif";
        case Season::Jayad: return "Jayad";
        case Season::Unknown: return "Unknown";
    }
    return "Unknown";
}

const char* to_string(Partition p) {
    switch (p) {
        case Partition::Train: return "Train";
        case Partition::Validation: return "Validation";
        case Partition::Test: return "Test";
    }
    return "Train";
}

std::optional<std::chrono::year_month_day> parse_date(std::string_view raw) {
    using namespace std::chrono;
    auto s = text::trim(raw);
    if (s.size() < 8) return std::nullopt;
    auto make = [](std::optional<int> y, std::optional<int> m, std::optional<int> d)
        -> std::optional<year_month_day> {
        if (!y || !m || !d || *m < 1 || *d < 1) return std::nullopt;
        year_month_day ymd{year{*y}, month{static_cast<unsigned>(*m)}, day{static_cast<unsigned>(*d)}};
        if (!ymd.ok()) return std::nullopt;
        return ymd;
    };
    // Year first: YYYY-MM-DD[...]
    if (s.size() >= 10 && (s[4] == '-' || s[4] == '/') && s[7] == s[4]) {
        if (s.size() > 10 && s[10] != 'T' && s[10] != ' ') return std::nullopt;
        return make(parse_int(s.substr(0, 4)), parse_int(s.substr(5, 2)), parse_int(s.substr(8, 2)));
    }
    // Day first: DD-MM-YYYY[...]
    if (s.size() >= 10 && (s[2] == '-' || s[2] == '/') && s[5] == s[2]) {
        if (s.size() > 10 && s[10] != 'T' && s[10] != ' ') return std::nullopt;
        return make(parse_int(s.substr(6, 4)), parse_int(s.substr(3, 2)), parse_int(s.substr(0, 2)));
    }
    return std::nullopt;
}

std::string format_date(const std::chrono::year_month_day& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

SchemaMap SchemaMap::from_entries(const std::map<std::string, std::string>& entries) {
    SchemaMap m;
    for (const auto& [k, v] : entries) {
        if (k == "id") m.id = v;
        else if (k == "state") m.state = v;
        else if (k == "district") m.district = v;
        else if (k == "sector") m.sector = v;
        else if (k == "season") m.season = v;
        else if (k == "crop") m.crop = v;
        else if (k == "query_type") m.query_type = v;
        else if (k == "query_text") m.query_text = v;
        else if (k == "expert_answer") m.expert_answer = v;
        else if (k == "created_on") m.created_on = v;
        else throw Error(ErrorCode::InvalidArgument, "unknown schema field: " + k);
    }
    return m;
}

std::string StratumKey::of(const QueryRecord& r) const {
    std::string key;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) key += '|';
        switch (fields[i]) {
            case StratumField::QueryType: key += r.query_type; break;
            case StratumField::Sector: key += to_string(r.sector); break;
            case StratumField::Season: key += to_string(r.season); break;
            case StratumField::Crop: key += r.crop; break;
        }
    }
    return key;
}

std::string StratumKey::describe() const {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += field_name(fields[i]);
    }
    return out;
}

StratumKey StratumKey::parse(std::string_view list) {
    StratumKey key;
    key.fields.clear();
    std::size_t pos = 0;
    while (pos <= list.size()) {
        auto comma = list.find(',', pos);
        if (comma == std::string_view::npos) comma = list.size();
        auto name = text::to_lower(text::trim(list.substr(pos, comma - pos)));
        if (name == "query_type") key.fields.push_back(StratumField::QueryType);
        else if (name == "sector") key.fields.push_back(StratumField::Sector);
        else if (name == "season") key.fields.push_back(StratumField::Season);
        else if (name == "crop") key.fields.push_back(StratumField::Crop);
        else throw Error(ErrorCode::InvalidArgument, "unknown stratum field: '" + name + "'");
        pos = comma + 1;
    }
    return key;
}

std::string CorpusStats::to_json() const {
    ordered_json j;
    j["total_rows"] = total_rows;
    j["record_count"] = record_count;
    j["rejected_row_count"] = rejected_row_count;
    j["per_stratum"] = per_stratum;
    j["rejection_reasons"] = rejection_reasons;
    return j.dump();
}

// ---------------------------------------------------------------------------
// CSV ingestion

CsvRecordReader::CsvRecordReader(const fs::path& path, SchemaMap schema, StratumKey key)
    : schema_(std::move(schema)), key_(std::move(key)) {
    if (!fs::exists(path)) throw Error(ErrorCode::Io, "input file not found: " + path.string());
    in_.open(path, std::ios::binary);
    if (!in_) throw Error(ErrorCode::Io, "cannot open input file: " + path.string());

    std::vector<std::string> header;
    std::string reason;
    if (read_row(header, reason) != RowStatus::Ok || header.empty())
        throw Error(ErrorCode::Parse, "missing or malformed CSV header in " + path.string());
    if (header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
    header_size_ = header.size();

    auto locate = [&](const std::string& column) {
        if (column.empty()) return -1;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (iequals(text::trim(header[i]), text::trim(column))) return static_cast<int>(i);
        }
        return -1;
    };
    cols_.id = locate(schema_.id);
    cols_.state = locate(schema_.state);
    cols_.district = locate(schema_.district);
    cols_.sector = locate(schema_.sector);
    cols_.season = locate(schema_.season);
    cols_.crop = locate(schema_.crop);
    cols_.query_type = locate(schema_.query_type);
    cols_.query_text = locate(schema_.query_text);
    cols_.expert_answer = locate(schema_.expert_answer);
    cols_.created_on = locate(schema_.created_on);

    std::string missing;
    if (cols_.query_text < 0) missing += " '" + schema_.query_text + "'";
    if (cols_.expert_answer < 0) missing += " '" + schema_.expert_answer + "'";
    if (!schema_.id.empty() && cols_.id < 0) missing += " '" + schema_.id + "'";
    if (!missing.empty()) throw Error(ErrorCode::Validation, "missing mandatory column(s):" + missing);
}

CsvRecordReader::RowStatus CsvRecordReader::read_row(std::vector<std::string>& fields,
                                                     std::string& reason) {
    fields.clear();
    std::string cur;
    bool in_quotes = false;
    bool after_quote = false;  // just closed a quoted field
    bool malformed = false;
    bool any = false;
    auto* buf = in_.rdbuf();
    for (;;) {
        int ci = buf->sbumpc();
        if (ci == std::char_traits<char>::eof()) {
            if (!any) return RowStatus::Eof;
            if (in_quotes) {
                reason = "unterminated quote";
                return RowStatus::Malformed;
            }
            fields.push_back(std::move(cur));
            break;
        }
        any = true;
        const char c = static_cast<char>(ci);
        if (in_quotes) {
            if (c == '"') {
                if (buf->sgetc() == '"') {
                    buf->sbumpc();
                    cur += '"';
                } else {
                    in_quotes = false;
                    after_quote = true;
                }
            } else {
                cur += c;
            }
            continue;
        }
        if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
            after_quote = false;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && buf->sgetc() == '\n') buf->sbumpc();
            if (fields.empty() && cur.empty() && !after_quote) {
                any = false;  // blank line
                continue;
            }
            fields.push_back(std::move(cur));
            break;
        } else if (c == '"') {
            if (cur.empty() && !after_quote) {
                in_quotes = true;
            } else {
                malformed = true;
                cur += c;
            }
        } else {
            if (after_quote) malformed = true;
            cur += c;
        }
    }
    if (malformed) {
        reason = "malformed quoting";
        return RowStatus::Malformed;
    }
    return RowStatus::Ok;
}

void CsvRecordReader::reject(const std::string& reason) {
    ++stats_.rejected_row_count;
    ++stats_.rejection_reasons[reason];
}

std::string CsvRecordReader::field(const std::vector<std::string>& row, int index) const {
    if (index < 0) return {};
    return std::string(text::trim(row[static_cast<std::size_t>(index)]));
}

std::optional<QueryRecord> CsvRecordReader::next() {
    std::vector<std::string> row;
    std::string reason;
    for (;;) {
        auto status = read_row(row, reason);
        if (status == RowStatus::Eof) return std::nullopt;
        ++stats_.total_rows;
        if (status == RowStatus::Malformed) {
            reject(reason);
            continue;
        }
        if (row.size() != header_size_) {
            reject("column count mismatch");
            continue;
        }
        QueryRecord r;
        r.query_text = field(row, cols_.query_text);
        r.expert_answer = field(row, cols_.expert_answer);
        if (r.query_text.empty()) {
            reject("empty query_text");
            continue;
        }
        if (r.expert_answer.empty()) {
            reject("empty expert_answer");
            continue;
        }
        r.id = field(row, cols_.id);
        if (cols_.id >= 0 && r.id.empty()) {
            reject("empty id");
            continue;
        }
        if (r.id.empty()) r.id = "row-" + std::to_string(stats_.total_rows);
        if (!seen_ids_.insert(r.id).second) {
            reject("duplicate id");
            continue;
        }
        r.state = field(row, cols_.state);
        r.district = field(row, cols_.district);
        r.sector = parse_sector(field(row, cols_.sector));
        r.season = parse_season(field(row, cols_.season));
        r.crop = field(row, cols_.crop);
        r.query_type = field(row, cols_.query_type);
        r.created_on = parse_date(field(row, cols_.created_on));

        ++stats_.record_count;
        ++stats_.per_stratum[key_.of(r)];
        return r;
    }
}

IngestResult ingest_csv(const fs::path& path, const SchemaMap& schema, const StratumKey& key) {
    CsvRecordReader reader(path, schema, key);
    IngestResult result;
    while (auto r = reader.next()) result.records.push_back(std::move(*r));
    result.stats = reader.stats();
    if (result.records.empty())
        throw Error(ErrorCode::NoData, "no valid rows in " + path.string() + " (" +
                                           std::to_string(result.stats.rejected_row_count) +
                                           " rejected)");
    return result;
}

// ---------------------------------------------------------------------------
// Splitting

std::optional<Partition> SplitAssignment::find(std::string_view id) const {
    for (const auto& [rid, p] : entries) {
        if (rid == id) return p;
    }
    return std::nullopt;
}

std::size_t SplitAssignment::count(Partition p) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [p](const auto& e) { return e.second == p; }));
}

std::string SplitAssignment::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["stratum_key"] = key.describe();
    ordered_json a = ordered_json::array();
    for (const auto& [id, p] : entries) a.push_back({{"id", id}, {"partition", to_string(p)}});
    j["assignment"] = std::move(a);
    return j.dump();
}

SplitAssignment stratified_split(std::span<const QueryRecord> records, double test_frac,
                                 double val_frac, std::uint64_t seed, const StratumKey& key) {
    if (records.empty()) throw Error(ErrorCode::InvalidArgument, "cannot split an empty corpus");
    if (!(test_frac >= 0.0) || !(val_frac >= 0.0) || !(test_frac + val_frac > 0.0) ||
        !(test_frac + val_frac < 1.0))
        throw Error(ErrorCode::InvalidArgument, "split fractions out of range: need 0 < test + val < 1");

    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < records.size(); ++i) strata[key.of(records[i])].push_back(i);

    std::vector<Partition> part(records.size(), Partition::Train);
    for (auto& [name, members] : strata) {
        const std::size_t n = members.size();
        if (n < 3) continue;
        std::mt19937_64 eng(splitmix64(seed ^ fnv1a(name)));
        for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(members[i], members[bounded(eng, i + 1)]);
        }
        const std::size_t n_test = std::min(n, round_half_up(n, test_frac));
        const std::size_t n_val = std::min(n - n_test, round_half_up(n, val_frac));
        for (std::size_t i = 0; i < n_test; ++i) part[members[i]] = Partition::Test;
        for (std::size_t i = n_test; i < n_test + n_val; ++i) part[members[i]] = Partition::Validation;
    }

    SplitAssignment out;
    out.seed = seed;
    out.key = key;
    out.entries.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) out.entries.emplace_back(records[i].id, part[i]);
    return out;
}

// ---------------------------------------------------------------------------
// JSON Lines

std::string to_json_line(const QueryRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["state"] = r.state;
    j["district"] = r.district;
    j["sector"] = to_string(r.sector);
    j["season"] = to_string(r.season);
    j["crop"] = r.crop;
    j["query_type"] = r.query_type;
    j["query_text"] = r.query_text;
    j["expert_answer"] = r.expert_answer;
    if (r.created_on) j["created_on"] = format_date(*r.created_on);
    else j["created_on"] = nullptr;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

QueryRecord record_from_json_line(std::string_view line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("invalid JSON record: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::Parse, "JSON record is not an object");
    auto str = [&](const char* k) -> std::string {
        auto it = j.find(k);
        if (it == j.end() || it->is_null()) return {};
        if (!it->is_string()) throw Error(ErrorCode::Parse, std::string("field '") + k + "' is not a string");
        return it->get<std::string>();
    };
    QueryRecord r;
    r.id = str("id");
    r.state = str("state");
    r.district = str("district");
    r.sector = parse_sector(str("sector"));
    r.season = parse_season(str("season"));
    r.crop = str("crop");
    r.query_type = str("query_type");
    r.query_text = str("query_text");
    r.expert_answer = str("expert_answer");
    auto date = str("created_on");
    if (!date.empty()) r.created_on = parse_date(date);
    if (r.id.empty()) throw Error(ErrorCode::Validation, "record without id");
    if (text::trim(r.query_text).empty() || text::trim(r.expert_answer).empty())
        throw Error(ErrorCode::Validation, "record " + r.id + " has empty query_text or expert_answer");
    return r;
}

void write_jsonl(std::span<const QueryRecord> records, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (const auto& r : records) out << to_json_line(r) << '\n';
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

void write_partition(std::span<const QueryRecord> records, const SplitAssignment& assignment,
                     Partition partition, const fs::path& path) {
    std::map<std::string_view, Partition> lookup;
    for (const auto& [id, p] : assignment.entries) lookup.emplace(id, p);
    std::vector<QueryRecord> selected;
    for (const auto& r : records) {
        auto it = lookup.find(r.id);
        if (it == lookup.end())
            throw Error(ErrorCode::Validation, "record " + r.id + " missing from split assignment");
        if (it->second == partition) selected.push_back(r);
    }
    write_jsonl(selected, path);
}

std::vector<QueryRecord> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<QueryRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(record_from_json_line(line));
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace agriqa::corpus
