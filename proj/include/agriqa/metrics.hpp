#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace agriqa::metrics {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    bool operator==(const Prf&) const = default;
};

/// 2PR/(P+R), or 0 when P+R == 0.
double harmonic_f1(double precision, double recall);
Prf make_prf(double precision, double recall);

struct Readability {
    double fkgl = 0.0;
    double cli = 0.0;
    double dcrs = 0.0;

    bool operator==(const Readability&) const = default;
};

struct ReadabilityInputs {
    std::size_t sentence_count = 0;
    std::size_t word_count = 0;
    std::size_t syllable_count = 0;
    std::size_t letter_count = 0;
    std::size_t difficult_word_count = 0;

    ReadabilityInputs& operator+=(const ReadabilityInputs& o);
    bool operator==(const ReadabilityInputs&) const = default;
};

struct MetricReport {
    double bleu = 0.0;
    Prf rouge1;
    std::optional<Prf> bertscore;  // nullopt when no embeddings were supplied
    Readability readability;
    std::size_t n_pairs = 0;

    bool operator==(const MetricReport&) const = default;
};

std::string to_json(const MetricReport& r);
MetricReport report_from_json(std::string_view json);
std::string render_table(const MetricReport& r);

struct TokenEmbeddings {
    std::vector<std::string> tokens;
    std::vector<std::vector<double>> vectors;

    std::size_t dimension() const { return vectors.empty() ? 0 : vectors.front().size(); }
    /// Throws if counts differ, dimensions are ragged, or any entry is NaN.
    void validate() const;
};

// ---------------------------------------------------------------------------
// BLEU

constexpr int kBleuOrder = 4;

/// Clipped n-gram matches and candidate n-gram totals for n = 1..4, plus
/// lengths, accumulated over a corpus.
struct BleuStats {
    std::array<std::size_t, kBleuOrder> matches{};
    std::array<std::size_t, kBleuOrder> totals{};
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;

    BleuStats& operator+=(const BleuStats& o);
    bool operator==(const BleuStats&) const = default;

    /// Geometric mean of the modified precisions times the brevity penalty.
    /// A zero precision for n >= 2 is replaced by 1/(total+1).
    double score() const;
};

BleuStats bleu_stats(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Corpus-level BLEU-4 over one reference per candidate.
double bleu(std::span<const std::string> candidates, std::span<const std::string> references);

// ---------------------------------------------------------------------------
// ROUGE-1, BERTScore

Prf rouge1(std::string_view candidate, std::string_view reference);

/// Greedy cosine matching without idf weighting or baseline rescaling.
Prf bertscore(const TokenEmbeddings& candidate, const TokenEmbeddings& reference);

// ---------------------------------------------------------------------------
// Readability

/// Vowel-group syllable count (aeiouy), minus one for a silent final 'e'
/// unless the word ends in consonant + "le". Never below 1.
int count_syllables(std::string_view word);

/// Sentences end at '.', '!' or '?' followed by whitespace or end of text.
/// Only segments containing a word count; a word-bearing text has at least one.
std::size_t count_sentences(std::string_view text);

class FamiliarWords {
public:
    FamiliarWords() = default;
    explicit FamiliarWords(std::unordered_set<std::string> words) : words_(std::move(words)) {}
    static FamiliarWords load(const std::filesystem::path& path);

    /// `lower` is familiar if listed as-is or after stripping a plural 's'.
    bool is_familiar(std::string_view lower) const;
    std::size_t size() const { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
};

ReadabilityInputs readability_inputs(std::string_view text, const FamiliarWords& familiar);
Readability readability_from_counts(const ReadabilityInputs& in);
/// Throws when the text has no words.
Readability readability(std::string_view text, const FamiliarWords& familiar);

// ---------------------------------------------------------------------------
// Pair evaluation

struct EvalPair {
    std::string id;
    std::string prediction;
    std::string reference;
    std::optional<TokenEmbeddings> prediction_embeddings;
    std::optional<TokenEmbeddings> reference_embeddings;
};

/// Corpus BLEU, mean ROUGE-1, mean BERTScore (only when every pair carries
/// embeddings) and readability over all predictions.
MetricReport evaluate(std::span<const EvalPair> pairs, const FamiliarWords& familiar);

struct IdText {
    std::string id;
    std::string text;
};

std::vector<IdText> read_id_text_jsonl(const std::filesystem::path& path);

struct EmbeddingEntry {
    std::optional<TokenEmbeddings> prediction;
    std::optional<TokenEmbeddings> reference;
};

/// Header line {"dimension": D}, then {"id", "side", "tokens", "vectors"}
/// lines where side is "prediction" or "reference".
std::map<std::string, EmbeddingEntry> load_embeddings(const std::filesystem::path& path);

/// Joins predictions and references on id, in reference order. Throws naming
/// the first id present on one side only.
std::vector<EvalPair> align_pairs(std::span<const IdText> predictions, std::span<const IdText> references);

void attach_embeddings(std::vector<EvalPair>& pairs, const std::map<std::string, EmbeddingEntry>& cache);

MetricReport evaluate_pairs(const std::filesystem::path& predictions, const std::filesystem::path& references,
                            const FamiliarWords& familiar,
                            const std::optional<std::filesystem::path>& embeddings = std::nullopt);

}  // namespace agriqa::metrics
