#include "agriqa/normalize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "agriqa/error.hpp"
#include "agriqa/text.hpp"

namespace agriqa::normalize {

namespace fs = std::filesystem;

namespace {

enum class Kind { Word, Number, Punct };

struct Segment {
    std::string text;
    Kind kind = Kind::Word;
    bool glued = false;  // no whitespace before this segment
    bool expanded_unit = false;
};

// Whitespace chunks, each split into word/number runs and punctuation runs.
// A '.' between two digits stays inside the number.
std::vector<Segment> segment(std::string_view s) {
    std::vector<Segment> out;
    std::size_t i = 0;
    bool chunk_start = true;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (text::is_space(c)) {
            chunk_start = true;
            ++i;
            continue;
        }
        std::size_t j = i;
        Segment seg;
        if (text::is_word_byte(c)) {
            while (j < s.size()) {
                const auto d = static_cast<unsigned char>(s[j]);
                if (text::is_word_byte(d)) {
                    ++j;
                } else if (d == '.' && j > i && text::is_digit(static_cast<unsigned char>(s[j - 1])) &&
                           j + 1 < s.size() && text::is_digit(static_cast<unsigned char>(s[j + 1]))) {
                    ++j;
                } else {
                    break;
                }
            }
            seg.text = std::string(s.substr(i, j - i));
            seg.kind = text::is_number(seg.text) ? Kind::Number : Kind::Word;
        } else {
            while (j < s.size()) {
                const auto d = static_cast<unsigned char>(s[j]);
                if (text::is_space(d) || text::is_word_byte(d)) break;
                ++j;
            }
            seg.text = std::string(s.substr(i, j - i));
            seg.kind = Kind::Punct;
        }
        seg.glued = !chunk_start;
        chunk_start = false;
        out.push_back(std::move(seg));
        i = j;
    }
    return out;
}

std::string render(const std::vector<Segment>& segs) {
    std::string out;
    for (const auto& s : segs) {
        if (!out.empty() && !s.glued) out += ' ';
        out += s.text;
    }
    return out;
}

// Length of a leading "digits[.digits]" prefix.
std::size_t number_prefix(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && text::is_digit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == 0) return 0;
    if (i + 1 < s.size() && s[i] == '.' && text::is_digit(static_cast<unsigned char>(s[i + 1]))) {
        i += 1;
        while (i < s.size() && text::is_digit(static_cast<unsigned char>(s[i]))) ++i;
    }
    return i;
}

bool all_alpha(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return text::is_alpha(static_cast<unsigned char>(c)); });
}

std::size_t digit_count(std::string_view s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return text::is_digit(static_cast<unsigned char>(c)); }));
}

std::optional<std::string> lookup(const std::map<std::string, std::string>& m, std::string_view key) {
    auto it = m.find(std::string(key));
    if (it == m.end()) return std::nullopt;
    return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rule set

std::map<std::string, std::string> read_lexicon(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open lexicon " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": expected key<TAB>expansion");
        std::string key(text::trim(std::string_view(line).substr(0, tab)));
        std::string value(text::trim(std::string_view(line).substr(tab + 1)));
        if (key.empty() || value.empty())
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": empty key or expansion");
        out[key] = value;
    }
    return out;
}

NormalizationRuleSet::NormalizationRuleSet(std::map<std::string, std::string> units,
                                           std::map<std::string, std::string> abbreviations,
                                           std::map<std::string, std::string> compounds,
                                           std::vector<std::string> proper_nouns)
    : units_(std::move(units)), abbreviations_(std::move(abbreviations)), compounds_(std::move(compounds)) {
    for (auto& p : proper_nouns) proper_nouns_[text::to_lower(p)] = p;
    for (const auto& [k, v] : units_) {
        auto e = text::to_lower(v);
        canonical_units_.insert(e);
        canonical_units_.insert(e + "s");
        if (e.size() > 1 && e.back() == 's') canonical_units_.insert(e.substr(0, e.size() - 1));
    }
    validate();
}

NormalizationRuleSet NormalizationRuleSet::load(const fs::path& dir) {
    std::vector<std::string> nouns;
    const auto nouns_path = dir / "proper_nouns.txt";
    if (fs::exists(nouns_path)) {
        std::ifstream in(nouns_path);
        std::string line;
        while (std::getline(in, line)) {
            auto t = text::trim(line);
            if (!t.empty() && t.front() != '#') nouns.emplace_back(t);
        }
    }
    return NormalizationRuleSet(read_lexicon(dir / "units.tsv"), read_lexicon(dir / "abbreviations.tsv"),
                                read_lexicon(dir / "compounds.tsv"), std::move(nouns));
}

// Load-time checks that make normalize_text idempotent: no expansion may
// reintroduce a key, a "per" context, or a digit.
void NormalizationRuleSet::validate() const {
    const std::map<std::string, std::string>* lexicons[] = {&units_, &abbreviations_, &compounds_};
    const char* names[] = {"units", "abbreviations", "compounds"};
    auto is_key = [&](const std::string& w) {
        return units_.count(w) || abbreviations_.count(w) || compounds_.count(w);
    };
    for (int li = 0; li < 3; ++li) {
        for (const auto& [key, value] : *lexicons[li]) {
            const std::string where = std::string(names[li]) + " entry '" + key + "'";
            if (text::to_lower(key) != key) throw Error(ErrorCode::Validation, where + ": keys must be lowercase");
            if (value != key && text::to_lower(value) == key)
                throw Error(ErrorCode::Validation, where + ": maps to itself with different case");
            if (value == key) continue;
            if (digit_count(value) > 0) throw Error(ErrorCode::Validation, where + ": expansion contains digits");
            for (const auto& w : text::tokenize(value)) {
                if (w == "per") throw Error(ErrorCode::Validation, where + ": expansion contains 'per'");
                if (is_key(w)) throw Error(ErrorCode::Validation, where + ": expansion word '" + w + "' is itself a key");
                if (rate(w)) throw Error(ErrorCode::Validation, where + ": expansion word '" + w + "' reads as a rate");
            }
        }
    }
    for (const auto& [lower, written] : proper_nouns_) {
        if (is_key(lower)) throw Error(ErrorCode::Validation, "proper noun '" + written + "' collides with a lexicon key");
    }
}

std::optional<std::string> NormalizationRuleSet::unit(std::string_view lower) const { return lookup(units_, lower); }
std::optional<std::string> NormalizationRuleSet::abbreviation(std::string_view lower) const { return lookup(abbreviations_, lower); }
std::optional<std::string> NormalizationRuleSet::compound(std::string_view lower) const { return lookup(compounds_, lower); }
std::optional<std::string> NormalizationRuleSet::proper_noun(std::string_view lower) const { return lookup(proper_nouns_, lower); }

std::optional<std::string> NormalizationRuleSet::rate(std::string_view lower) const {
    if (lower.size() < 2 || units_.count(std::string(lower))) return std::nullopt;
    // Longest leading unit first.
    for (std::size_t k = lower.size() - 1; k >= 1; --k) {
        auto a = unit(lower.substr(0, k));
        if (!a) continue;
        auto b = unit(lower.substr(k));
        if (b) return *a + " per " + *b;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// normalize_text

std::string normalize_text(std::string_view input, const NormalizationRuleSet& rules) {
    auto segs = segment(input);

    // (2) number/unit junctions
    std::vector<Segment> split;
    split.reserve(segs.size());
    for (auto& s : segs) {
        if (s.kind == Kind::Word) {
            const auto n = number_prefix(s.text);
            if (n > 0 && n < s.text.size()) {
                const auto rest = std::string_view(s.text).substr(n);
                const auto lower = text::to_lower(rest);
                if (all_alpha(rest) && (rules.unit(lower) || rules.rate(lower))) {
                    split.push_back({s.text.substr(0, n), Kind::Number, s.glued});
                    split.push_back({std::string(rest), Kind::Word, false});
                    continue;
                }
            }
        }
        split.push_back(std::move(s));
    }
    segs = std::move(split);

    // (3) units and abbreviations, (4) rates
    for (std::size_t i = 0; i < segs.size(); ++i) {
        auto& s = segs[i];
        if (s.kind != Kind::Word) continue;
        const auto lower = text::to_lower(s.text);
        const Segment* prev = i > 0 ? &segs[i - 1] : nullptr;
        const bool after_number = prev && prev->kind == Kind::Number;
        const bool after_per = prev && prev->kind == Kind::Word && text::to_lower(prev->text) == "per";
        // "kilograms/ac": a slash between an expanded unit and a unit key reads as "per".
        const bool after_slash = prev && prev->kind == Kind::Punct && prev->text == "/" && s.glued && i >= 2 &&
                                 segs[i - 2].expanded_unit;
        if (auto u = rules.unit(lower); u && (after_number || after_per || after_slash)) {
            if (after_slash) {
                segs[i - 1] = {"per", Kind::Word, false};
                s.glued = false;
            }
            s.text = *u;
            s.expanded_unit = true;
        } else if (auto r = after_number ? rules.rate(lower) : std::nullopt) {
            s.text = *r;
            s.expanded_unit = true;
        } else if (auto a = rules.abbreviation(lower)) {
            s.text = *a;
        }
    }

    // (5) compounds, (6) case folding
    for (auto& s : segs) {
        if (s.kind != Kind::Word) continue;
        const auto lower = text::to_lower(s.text);
        if (auto c = rules.compound(lower)) {
            s.text = text::to_lower(*c);
        } else if (auto p = rules.proper_noun(lower)) {
            s.text = *p;
        } else {
            s.text = lower;
        }
    }
    return render(segs);
}

// ---------------------------------------------------------------------------
// parse_quantities

std::vector<QuantityToken> parse_quantities(std::string_view input, const NormalizationRuleSet& rules) {
    const auto segs = segment(input);
    const auto& vocab = rules.canonical_units();
    auto word_at = [&](std::size_t i) -> std::optional<std::string> {
        if (i >= segs.size() || segs[i].kind != Kind::Word) return std::nullopt;
        return text::to_lower(segs[i].text);
    };
    std::vector<QuantityToken> out;
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
        if (segs[i].kind != Kind::Number) continue;
        if (digit_count(segs[i].text) >= 7) continue;
        auto unit = word_at(i + 1);
        if (!unit || !vocab.count(*unit)) continue;
        QuantityToken q;
        q.literal = segs[i].text;
        std::from_chars(q.literal.data(), q.literal.data() + q.literal.size(), q.value);
        q.unit = *unit;
        if (word_at(i + 2) == std::optional<std::string>("per")) {
            if (auto per = word_at(i + 3); per && vocab.count(*per)) q.per_unit = *per;
        }
        out.push_back(std::move(q));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run-on detection

std::vector<RunOnFlag> detect_runons(std::span<const TextRecord> corpus, const RunOnOptions& opt) {
    if (opt.order < 1 || opt.order > 5) throw Error(ErrorCode::InvalidArgument, "n-gram order must be in 1..5");
    if (corpus.empty()) throw Error(ErrorCode::InvalidArgument, "run-on detection needs a non-empty corpus");

    std::vector<std::vector<text::TokenSpan>> tokenized;
    tokenized.reserve(corpus.size());
    std::unordered_map<std::string, std::size_t> unigram;
    std::unordered_map<std::string, std::size_t> bigram;
    for (const auto& rec : corpus) {
        auto spans = text::tokenize_spans(rec.text);
        for (std::size_t i = 0; i < spans.size(); ++i) {
            ++unigram[spans[i].token];
            if (i + 1 < spans.size()) ++bigram[spans[i].token + ' ' + spans[i + 1].token];
        }
        tokenized.push_back(std::move(spans));
    }
    auto freq = [&](const std::string& w) -> std::size_t {
        auto it = unigram.find(w);
        return it == unigram.end() ? 0 : it->second;
    };

    struct Candidate {
        std::string a, b;
        double score;
    };
    std::unordered_map<std::string, std::optional<Candidate>> memo;
    auto candidate_for = [&](const std::string& tok) -> const std::optional<Candidate>& {
        auto it = memo.find(tok);
        if (it != memo.end()) return it->second;
        std::optional<Candidate> best;
        std::size_t best_min = 0;
        const std::size_t ft = freq(tok);
        if (ft <= opt.max_token_freq && all_alpha(tok) && tok.size() >= 2 * std::max<std::size_t>(opt.min_part_len, 1)) {
            const std::size_t lo = std::max<std::size_t>(opt.min_part_len, 1);
            for (std::size_t k = lo; k + lo <= tok.size(); ++k) {
                auto a = tok.substr(0, k);
                auto b = tok.substr(k);
                const auto fa = freq(a), fb = freq(b);
                if (fa < opt.min_part_freq || fb < opt.min_part_freq) continue;
                const auto m = std::min(fa, fb);
                if (best && m <= best_min) continue;
                double evidence = static_cast<double>(1 + m) / static_cast<double>(1 + ft);
                if (opt.order >= 2) {
                    auto bi = bigram.find(a + ' ' + b);
                    evidence *= static_cast<double>(1 + (bi == bigram.end() ? 0 : bi->second));
                }
                best = Candidate{a, b, std::max(0.0, std::log(evidence))};
                best_min = m;
            }
        }
        return memo.emplace(tok, std::move(best)).first->second;
    };

    std::vector<RunOnFlag> flags;
    for (std::size_t r = 0; r < corpus.size(); ++r) {
        for (const auto& span : tokenized[r]) {
            const auto& c = candidate_for(span.token);
            if (!c) continue;
            flags.push_back({corpus[r].id, span.token, span.begin, span.end, c->score, c->a + ' ' + c->b});
        }
    }
    std::stable_sort(flags.begin(), flags.end(), [](const RunOnFlag& x, const RunOnFlag& y) { return x.score > y.score; });
    return flags;
}

std::string apply_flags(std::string_view input, std::span<const RunOnFlag> accepted) {
    std::vector<const RunOnFlag*> order;
    for (const auto& f : accepted) {
        if (f.begin >= f.end || f.end > input.size())
            throw Error(ErrorCode::Validation, "flag span [" + std::to_string(f.begin) + "," + std::to_string(f.end) + ") outside text");
        if (!f.token.empty() && text::to_lower(input.substr(f.begin, f.end - f.begin)) != f.token)
            throw Error(ErrorCode::Validation, "flag token '" + f.token + "' does not match text at its span");
        if (!f.suggested_split) throw Error(ErrorCode::Validation, "flag '" + f.token + "' has no suggestion");
        order.push_back(&f);
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->begin < b->begin; });
    std::string out;
    std::size_t pos = 0;
    for (const auto* f : order) {
        if (f->begin < pos) throw Error(ErrorCode::Validation, "overlapping flags at byte " + std::to_string(f->begin));
        out.append(input.substr(pos, f->begin - pos));
        out += *f->suggested_split;
        pos = f->end;
    }
    out.append(input.substr(pos));
    return out;
}

std::string to_json_line(const RunOnFlag& flag) {
    nlohmann::ordered_json j;
    j["record_id"] = flag.record_id;
    j["token"] = flag.token;
    j["span"] = {flag.begin, flag.end};
    j["score"] = flag.score;
    if (flag.suggested_split) j["suggestion"] = *flag.suggested_split;
    else j["suggestion"] = nullptr;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace agriqa::normalize
