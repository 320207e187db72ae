#include "agriqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "agriqa/error.hpp"
#include "agriqa/text.hpp"

namespace agriqa::metrics {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

double harmonic_f1(double p, double r) {
    const double s = p + r;
    return s == 0.0 ? 0.0 : 2.0 * p * r / s;
}

Prf make_prf(double p, double r) { return {p, r, harmonic_f1(p, r)}; }

ReadabilityInputs& ReadabilityInputs::operator+=(const ReadabilityInputs& o) {
    sentence_count += o.sentence_count;
    word_count += o.word_count;
    syllable_count += o.syllable_count;
    letter_count += o.letter_count;
    difficult_word_count += o.difficult_word_count;
    return *this;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace {

ordered_json prf_json(const Prf& p) {
    return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

Prf prf_from(const ordered_json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace

std::string to_json(const MetricReport& r) {
    ordered_json j;
    j["bleu"] = r.bleu;
    j["rouge1"] = prf_json(r.rouge1);
    j["bertscore"] = r.bertscore ? prf_json(*r.bertscore) : ordered_json(nullptr);
    j["bertscore_skipped"] = !r.bertscore.has_value();
    j["readability"] = {{"fkgl", r.readability.fkgl}, {"cli", r.readability.cli}, {"dcrs", r.readability.dcrs}};
    j["n_pairs"] = r.n_pairs;
    return j.dump();
}

MetricReport report_from_json(std::string_view json) {
    try {
        auto j = ordered_json::parse(json);
        MetricReport r;
        r.bleu = j.at("bleu").get<double>();
        r.rouge1 = prf_from(j.at("rouge1"));
        if (!j.at("bertscore").is_null()) r.bertscore = prf_from(j.at("bertscore"));
        const auto& rd = j.at("readability");
        r.readability = {rd.at("fkgl").get<double>(), rd.at("cli").get<double>(), rd.at("dcrs").get<double>()};
        r.n_pairs = j.at("n_pairs").get<std::size_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("invalid metric report: ") + e.what());
    }
}

std::string render_table(const MetricReport& r) {
    std::ostringstream os;
    os << "pairs        " << r.n_pairs << '\n'
       << "BLEU         " << fixed(r.bleu) << '\n'
       << "ROUGE-1  P   " << fixed(r.rouge1.precision) << "  R " << fixed(r.rouge1.recall) << "  F1 "
       << fixed(r.rouge1.f1) << '\n';
    if (r.bertscore) {
        os << "BERTScore P  " << fixed(r.bertscore->precision) << "  R " << fixed(r.bertscore->recall) << "  F1 "
           << fixed(r.bertscore->f1) << '\n';
    } else {
        os << "BERTScore    skipped (no embeddings)\n";
    }
    os << "FKGL         " << fixed(r.readability.fkgl, 3) << '\n'
       << "CLI          " << fixed(r.readability.cli, 3) << '\n'
       << "DCRS         " << fixed(r.readability.dcrs, 3) << '\n';
    return os.str();
}

void TokenEmbeddings::validate() const {
    if (tokens.size() != vectors.size())
        throw Error(ErrorCode::Validation, "embedding token count " + std::to_string(tokens.size()) +
                                               " != vector count " + std::to_string(vectors.size()));
    const auto dim = dimension();
    for (const auto& v : vectors) {
        if (v.size() != dim) throw Error(ErrorCode::Validation, "ragged embedding dimensions");
        for (double x : v) {
            if (std::isnan(x)) throw Error(ErrorCode::Validation, "NaN in embedding vector");
        }
    }
}

// ---------------------------------------------------------------------------
// BLEU

BleuStats& BleuStats::operator+=(const BleuStats& o) {
    for (int n = 0; n < kBleuOrder; ++n) {
        matches[n] += o.matches[n];
        totals[n] += o.totals[n];
    }
    candidate_length += o.candidate_length;
    reference_length += o.reference_length;
    return *this;
}

double BleuStats::score() const {
    if (candidate_length == 0 || matches[0] == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 0; n < kBleuOrder; ++n) {
        double p;
        if (matches[n] == 0) {
            p = 1.0 / static_cast<double>(totals[n] + 1);
        } else {
            p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        }
        log_sum += std::log(p);
    }
    double bp = 1.0;
    if (candidate_length < reference_length)
        bp = std::exp(1.0 - static_cast<double>(reference_length) / static_cast<double>(candidate_length));
    return bp * std::exp(log_sum / kBleuOrder);
}

BleuStats bleu_stats(std::span<const std::string> cand, std::span<const std::string> ref) {
    BleuStats s;
    s.candidate_length = cand.size();
    s.reference_length = ref.size();
    for (int n = 1; n <= kBleuOrder; ++n) {
        std::map<std::vector<std::string_view>, std::size_t> ref_counts;
        for (std::size_t i = 0; i + n <= ref.size(); ++i)
            ++ref_counts[std::vector<std::string_view>(ref.begin() + i, ref.begin() + i + n)];
        std::map<std::vector<std::string_view>, std::size_t> cand_counts;
        for (std::size_t i = 0; i + n <= cand.size(); ++i)
            ++cand_counts[std::vector<std::string_view>(cand.begin() + i, cand.begin() + i + n)];
        std::size_t total = 0, clipped = 0;
        for (const auto& [gram, c] : cand_counts) {
            total += c;
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) clipped += std::min(c, it->second);
        }
        s.totals[n - 1] = total;
        s.matches[n - 1] = clipped;
    }
    return s;
}

double bleu(std::span<const std::string> candidates, std::span<const std::string> references) {
    if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "BLEU needs at least one candidate");
    if (candidates.size() != references.size())
        throw Error(ErrorCode::InvalidArgument, "BLEU: " + std::to_string(candidates.size()) + " candidates vs " +
                                                    std::to_string(references.size()) + " references");
    BleuStats total;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        total += bleu_stats(text::tokenize(candidates[i]), text::tokenize(references[i]));
    return total.score();
}

// ---------------------------------------------------------------------------
// ROUGE-1

Prf rouge1(std::string_view candidate, std::string_view reference) {
    const auto c = text::tokenize(candidate);
    const auto r = text::tokenize(reference);
    if (c.empty() || r.empty()) return {};
    std::unordered_map<std::string, std::size_t> ref_counts;
    for (const auto& t : r) ++ref_counts[t];
    std::size_t overlap = 0;
    for (const auto& t : c) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return make_prf(static_cast<double>(overlap) / static_cast<double>(c.size()),
                    static_cast<double>(overlap) / static_cast<double>(r.size()));
}

// ---------------------------------------------------------------------------
// BERTScore

Prf bertscore(const TokenEmbeddings& cand, const TokenEmbeddings& ref) {
    cand.validate();
    ref.validate();
    if (cand.vectors.empty() || ref.vectors.empty())
        throw Error(ErrorCode::InvalidArgument, "BERTScore needs non-empty embeddings on both sides");
    if (cand.dimension() != ref.dimension())
        throw Error(ErrorCode::InvalidArgument, "BERTScore dimension mismatch: " + std::to_string(cand.dimension()) +
                                                    " vs " + std::to_string(ref.dimension()));

    auto unit = [](const std::vector<std::vector<double>>& vs) {
        std::vector<std::vector<double>> out;
        out.reserve(vs.size());
        for (const auto& v : vs) {
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0) throw Error(ErrorCode::InvalidArgument, "BERTScore: zero-norm embedding vector");
            std::vector<double> u(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) u[i] = v[i] / norm;
            out.push_back(std::move(u));
        }
        return out;
    };
    const auto cu = unit(cand.vectors);
    const auto ru = unit(ref.vectors);

    std::vector<double> best_for_cand(cu.size(), -1.0);
    std::vector<double> best_for_ref(ru.size(), -1.0);
    for (std::size_t i = 0; i < cu.size(); ++i) {
        for (std::size_t j = 0; j < ru.size(); ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < cu[i].size(); ++k) dot += cu[i][k] * ru[j][k];
            dot = std::clamp(dot, -1.0, 1.0);
            best_for_cand[i] = std::max(best_for_cand[i], dot);
            best_for_ref[j] = std::max(best_for_ref[j], dot);
        }
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    return make_prf(mean(best_for_cand), mean(best_for_ref));
}

// ---------------------------------------------------------------------------
// Readability

namespace {
bool is_vowel(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
}
}  // namespace

int count_syllables(std::string_view word) {
    const auto w = text::to_lower(word);
    int groups = 0;
    bool in_group = false;
    for (char c : w) {
        const bool v = is_vowel(c);
        if (v && !in_group) ++groups;
        in_group = v;
    }
    const std::size_t n = w.size();
    if (n >= 1 && w[n - 1] == 'e') {
        const bool consonant_le = n >= 3 && w[n - 2] == 'l' && text::is_alpha(static_cast<unsigned char>(w[n - 3])) &&
                                  !is_vowel(w[n - 3]);
        if (!consonant_le) --groups;
    }
    return std::max(groups, 1);
}

std::size_t count_sentences(std::string_view t) {
    std::size_t sentences = 0;
    bool has_word = false;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto c = static_cast<unsigned char>(t[i]);
        if (text::is_word_byte(c)) {
            has_word = true;
        } else if ((c == '.' || c == '!' || c == '?') &&
                   (i + 1 == t.size() || text::is_space(static_cast<unsigned char>(t[i + 1])))) {
            if (has_word) ++sentences;
            has_word = false;
        }
    }
    if (has_word) ++sentences;
    return sentences;
}

FamiliarWords FamiliarWords::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open familiar-word list " + path.string());
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        words.insert(text::to_lower(t));
    }
    return FamiliarWords(std::move(words));
}

bool FamiliarWords::is_familiar(std::string_view lower) const {
    if (words_.count(std::string(lower))) return true;
    return lower.size() > 1 && lower.back() == 's' && words_.count(std::string(lower.substr(0, lower.size() - 1)));
}

ReadabilityInputs readability_inputs(std::string_view t, const FamiliarWords& familiar) {
    ReadabilityInputs in;
    for (const auto& tok : text::tokenize(t)) {
        ++in.word_count;
        in.letter_count += text::utf8_length(tok);
        in.syllable_count += static_cast<std::size_t>(count_syllables(tok));
        if (!familiar.is_familiar(tok)) ++in.difficult_word_count;
    }
    in.sentence_count = count_sentences(t);
    return in;
}

Readability readability_from_counts(const ReadabilityInputs& in) {
    if (in.word_count == 0) throw Error(ErrorCode::InvalidArgument, "readability needs at least one word");
    const double words = static_cast<double>(in.word_count);
    const double sentences = static_cast<double>(std::max<std::size_t>(in.sentence_count, 1));
    const double wps = words / sentences;
    Readability r;
    r.fkgl = 0.39 * wps + 11.8 * (static_cast<double>(in.syllable_count) / words) - 15.59;
    const double letters_per_100 = 100.0 * static_cast<double>(in.letter_count) / words;
    const double sentences_per_100 = 100.0 * sentences / words;
    r.cli = 0.0588 * letters_per_100 - 0.296 * sentences_per_100 - 15.8;
    const double difficult_frac = static_cast<double>(in.difficult_word_count) / words;
    r.dcrs = 0.1579 * (100.0 * difficult_frac) + 0.0496 * wps;
    if (difficult_frac > 0.05) r.dcrs += 3.6365;
    return r;
}

Readability readability(std::string_view t, const FamiliarWords& familiar) {
    return readability_from_counts(readability_inputs(t, familiar));
}

// ---------------------------------------------------------------------------
// Pair evaluation

MetricReport evaluate(std::span<const EvalPair> pairs, const FamiliarWords& familiar) {
    if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to evaluate");
    MetricReport report;
    report.n_pairs = pairs.size();

    BleuStats bleu_total;
    double rp = 0, rr = 0;
    double bp = 0, br = 0;
    bool have_embeddings = true;
    ReadabilityInputs counts;
    for (const auto& p : pairs) {
        bleu_total += bleu_stats(text::tokenize(p.prediction), text::tokenize(p.reference));
        const auto r = rouge1(p.prediction, p.reference);
        rp += r.precision;
        rr += r.recall;
        if (p.prediction_embeddings && p.reference_embeddings) {
            const auto b = bertscore(*p.prediction_embeddings, *p.reference_embeddings);
            bp += b.precision;
            br += b.recall;
        } else {
            have_embeddings = false;
        }
        counts += readability_inputs(p.prediction, familiar);
    }
    const double n = static_cast<double>(pairs.size());
    report.bleu = bleu_total.score();
    // F1 is the harmonic mean of the averaged P and R so every reported
    // triple satisfies f1 == 2PR/(P+R).
    report.rouge1 = make_prf(rp / n, rr / n);
    if (have_embeddings) report.bertscore = make_prf(bp / n, br / n);
    if (counts.word_count == 0) throw Error(ErrorCode::Validation, "predictions contain no words");
    report.readability = readability_from_counts(counts);
    return report;
}

std::vector<IdText> read_id_text_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<IdText> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            out.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw Error(ErrorCode::NoData, "no entries in " + path.string());
    return out;
}

std::map<std::string, EmbeddingEntry> load_embeddings(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::map<std::string, EmbeddingEntry> out;
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> dim;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
        try {
            auto j = nlohmann::json::parse(line);
            if (!dim) {
                dim = j.at("dimension").get<std::size_t>();
                continue;
            }
            TokenEmbeddings e;
            e.tokens = j.at("tokens").get<std::vector<std::string>>();
            e.vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
            e.validate();
            if (!e.vectors.empty() && e.dimension() != *dim)
                throw Error(ErrorCode::Validation, where + "vector dimension " + std::to_string(e.dimension()) +
                                                       " != declared " + std::to_string(*dim));
            const auto side = j.at("side").get<std::string>();
            auto& entry = out[j.at("id").get<std::string>()];
            if (side == "prediction") entry.prediction = std::move(e);
            else if (side == "reference") entry.reference = std::move(e);
            else throw Error(ErrorCode::Parse, where + "side must be 'prediction' or 'reference'");
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::Parse, where + e.what());
        }
    }
    if (!dim) throw Error(ErrorCode::Parse, path.string() + ": missing dimension header line");
    return out;
}

std::vector<EvalPair> align_pairs(std::span<const IdText> predictions, std::span<const IdText> references) {
    if (predictions.empty() || references.empty()) throw Error(ErrorCode::NoData, "empty prediction or reference set");
    std::unordered_map<std::string, const IdText*> pred_by_id;
    for (const auto& p : predictions) {
        if (!pred_by_id.emplace(p.id, &p).second) throw Error(ErrorCode::Validation, "duplicate prediction id: " + p.id);
    }
    std::set<std::string> seen;
    std::vector<EvalPair> out;
    for (const auto& r : references) {
        if (!seen.insert(r.id).second) throw Error(ErrorCode::Validation, "duplicate reference id: " + r.id);
        auto it = pred_by_id.find(r.id);
        if (it == pred_by_id.end()) throw Error(ErrorCode::Validation, "missing prediction for id: " + r.id);
        out.push_back({r.id, it->second->text, r.text, std::nullopt, std::nullopt});
    }
    for (const auto& p : predictions) {
        if (!seen.count(p.id)) throw Error(ErrorCode::Validation, "missing reference for id: " + p.id);
    }
    return out;
}

void attach_embeddings(std::vector<EvalPair>& pairs, const std::map<std::string, EmbeddingEntry>& cache) {
    for (auto& p : pairs) {
        auto it = cache.find(p.id);
        if (it == cache.end() || !it->second.prediction || !it->second.reference)
            throw Error(ErrorCode::Validation, "embedding cache lacks both sides for id: " + p.id);
        p.prediction_embeddings = it->second.prediction;
        p.reference_embeddings = it->second.reference;
    }
}

MetricReport evaluate_pairs(const fs::path& predictions, const fs::path& references, const FamiliarWords& familiar,
                            const std::optional<fs::path>& embeddings) {
    const auto preds = read_id_text_jsonl(predictions);
    const auto refs = read_id_text_jsonl(references);
    auto pairs = align_pairs(preds, refs);
    if (embeddings) attach_embeddings(pairs, load_embeddings(*embeddings));
    return evaluate(pairs, familiar);
}

}  // namespace agriqa::metrics
