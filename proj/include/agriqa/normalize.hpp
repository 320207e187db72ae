#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agriqa::normalize {

/// Lexicons driving text cleanup. Immutable after load and safe to share.
///
/// Rules are applied in a fixed order:
///   1. split on whitespace and punctuation boundaries
///   2. split number/unit junctions ("50kg" -> "50" "kg")
///   3. unit expansion (after a number or "per") and abbreviation expansion
///   4. unit-pair rate expansion ("5 gmlit" -> "5 grams per litre")
///   5. compound splits ("neemcake" -> "neem cake")
///   6. case folding, keeping whitelisted proper nouns as written
class NormalizationRuleSet {
public:
    NormalizationRuleSet() = default;
    NormalizationRuleSet(std::map<std::string, std::string> units,
                         std::map<std::string, std::string> abbreviations,
                         std::map<std::string, std::string> compounds,
                         std::vector<std::string> proper_nouns = {});

    /// Loads units.tsv, abbreviations.tsv, compounds.tsv and (optionally)
    /// proper_nouns.txt from `dir`.
    static NormalizationRuleSet load(const std::filesystem::path& dir);

    const std::map<std::string, std::string>& units() const { return units_; }
    const std::map<std::string, std::string>& abbreviations() const { return abbreviations_; }
    const std::map<std::string, std::string>& compounds() const { return compounds_; }

    std::optional<std::string> unit(std::string_view lower) const;
    /// "gmlit" -> "grams per litre" when the token is two unit keys fused.
    std::optional<std::string> rate(std::string_view lower) const;
    std::optional<std::string> abbreviation(std::string_view lower) const;
    std::optional<std::string> compound(std::string_view lower) const;
    std::optional<std::string> proper_noun(std::string_view lower) const;

    /// Unit words accepted by parse_quantities: every unit expansion plus its
    /// singular/plural variant.
    const std::set<std::string>& canonical_units() const { return canonical_units_; }

private:
    void validate() const;

    std::map<std::string, std::string> units_;
    std::map<std::string, std::string> abbreviations_;
    std::map<std::string, std::string> compounds_;
    std::map<std::string, std::string> proper_nouns_;  // lowercase -> as written
    std::set<std::string> canonical_units_;
};

/// Reads "key<TAB>expansion" lines; '#' starts a comment line.
std::map<std::string, std::string> read_lexicon(const std::filesystem::path& path);

std::string normalize_text(std::string_view text, const NormalizationRuleSet& rules);

struct QuantityToken {
    double value = 0.0;
    std::string literal;
    std::string unit;
    std::optional<std::string> per_unit;

    bool operator==(const QuantityToken&) const = default;
};

/// Number-adjacent unit mentions in normalized text. Digit runs of seven or
/// more digits are phone numbers and never quantities.
std::vector<QuantityToken> parse_quantities(std::string_view text, const NormalizationRuleSet& rules);

struct TextRecord {
    std::string id;
    std::string text;
};

struct RunOnOptions {
    int order = 2;                  // 1..5; orders >= 2 add bigram evidence to the score
    std::size_t max_token_freq = 2; // candidate tokens occur at most this often
    std::size_t min_part_freq = 10; // both halves occur at least this often
    std::size_t min_part_len = 2;
};

struct RunOnFlag {
    std::string record_id;
    std::string token;
    std::size_t begin = 0;  // byte span in the record text
    std::size_t end = 0;
    double score = 0.0;
    std::optional<std::string> suggested_split;
};

/// Flags rare tokens that bisect into two frequent corpus words. Advisory
/// only: the corpus is never modified. Ordered by descending score.
std::vector<RunOnFlag> detect_runons(std::span<const TextRecord> corpus, const RunOnOptions& options = {});

/// Replaces each flagged span with its suggestion. Throws on overlapping
/// flags or spans that do not match the text.
std::string apply_flags(std::string_view text, std::span<const RunOnFlag> accepted);

std::string to_json_line(const RunOnFlag& flag);

}  // namespace agriqa::normalize
