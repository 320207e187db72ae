#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "agriqa/error.hpp"
#include "agriqa/normalize.hpp"
#include "agriqa/text.hpp"
#include "support.hpp"

using namespace agriqa;
using namespace agriqa::normalize;
using testsupport::Gen;

namespace {

const NormalizationRuleSet& shipped() {
    static const auto rules = NormalizationRuleSet::load(testsupport::data_dir() / "rules");
    return rules;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
}

// Independent check of the run-on rule: count tokens, then try every
// bisection of every rare alphabetic token.
struct OracleHit {
    std::string record_id;
    std::size_t begin;
    std::string token;
    std::set<std::string> valid_splits;  // all bisections passing the test
    std::size_t best_min;
};

std::vector<OracleHit> runon_oracle(const std::vector<TextRecord>& corpus, std::size_t max_freq,
                                    std::size_t min_part, std::size_t min_len) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : corpus)
        for (const auto& t : text::tokenize(r.text)) ++counts[t];
    auto count = [&](const std::string& w) { return counts.count(w) ? counts[w] : 0; };
    std::vector<OracleHit> hits;
    for (const auto& r : corpus) {
        for (const auto& sp : text::tokenize_spans(r.text)) {
            const auto& t = sp.token;
            if (count(t) > max_freq) continue;
            if (!std::all_of(t.begin(), t.end(), [](char c) { return c >= 'a' && c <= 'z'; })) continue;
            OracleHit h{r.id, sp.begin, t, {}, 0};
            for (std::size_t k = 1; k < t.size(); ++k) {
                auto a = t.substr(0, k), b = t.substr(k);
                if (a.size() < min_len || b.size() < min_len) continue;
                if (count(a) >= min_part && count(b) >= min_part) {
                    h.valid_splits.insert(a + " " + b);
                    h.best_min = std::max(h.best_min, std::min(count(a), count(b)));
                }
            }
            if (!h.valid_splits.empty()) hits.push_back(h);
        }
    }
    return hits;
}

std::string repeat(const std::string& w, int n) {
    std::string out;
    for (int i = 0; i < n; ++i) out += (i ? " " : "") + w;
    return out;
}

}  // namespace

TEST_CASE("banana answer golden") {
    CHECK(normalize_text("spray borox 5g copper sulphate 5g zinc sulphate 5gmlit of water", shipped()) ==
          "spray borox 5 grams copper sulphate 5 grams zinc sulphate 5 grams per litre of water");
}

TEST_CASE("neem cake golden") {
    CHECK(normalize_text("apply DAP 50kg neemcake 10kg per ac", shipped()) ==
          "apply dap 50 kilograms neem cake 10 kilograms per acre");
    CHECK(normalize_text("apply dap 50 kilograms neem cake 10 kilograms per acre", shipped()) ==
          "apply dap 50 kilograms neem cake 10 kilograms per acre");
}

TEST_CASE("proper nouns keep their case, everything else folds") {
    CHECK(normalize_text("Contact KVK COIMBATORE 0422-2453578", shipped()) == "contact kvk Coimbatore 0422-2453578");
    CHECK(normalize_text("Spray Dithane M45 2GM/LIT", shipped()) == "spray Dithane m45 2 grams per litre");
}

TEST_CASE("unit keys only expand next to a number or after per") {
    CHECK(normalize_text("g l ac", shipped()) == "g l ac");
    CHECK(normalize_text("2 l per ha", shipped()) == "2 litre per hectare");
    CHECK(normalize_text("3.5kg", shipped()) == "3.5 kilograms");
    CHECK(normalize_text("fym 5 tonnes plz", shipped()) == "farmyard manure 5 tonnes please");
    CHECK(normalize_text("", shipped()).empty());
}

TEST_CASE("rate expansion") {
    CHECK(shipped().rate("gmlit") == std::optional<std::string>("grams per litre"));
    CHECK(shipped().rate("mlac") == std::optional<std::string>("millilitre per acre"));
    CHECK_FALSE(shipped().rate("kg"));
    CHECK_FALSE(shipped().rate("water"));
}

TEST_CASE("property: normalization is idempotent") {
    Gen g(20240611);
    for (int i = 0; i < 2000; ++i) {
        const auto t = g.messy_text();
        const auto once = normalize_text(t, shipped());
        INFO("input: " << t);
        CHECK(normalize_text(once, shipped()) == once);
    }
}

TEST_CASE("property: numeric literals survive normalization") {
    Gen g(77);
    for (int i = 0; i < 2000; ++i) {
        const auto t = g.messy_text();
        INFO("input: " << t);
        CHECK(sorted(text::numeric_literals(t)) == sorted(text::numeric_literals(normalize_text(t, shipped()))));
    }
}

TEST_CASE("rule set validation") {
    using M = std::map<std::string, std::string>;
    CHECK_THROWS_AS(NormalizationRuleSet(M{{"KG", "kilograms"}}, {}, {}), Error);
    CHECK_THROWS_AS(NormalizationRuleSet(M{{"kg", "KG"}}, {}, {}), Error);
    CHECK_THROWS_AS(NormalizationRuleSet(M{{"g", "grams"}}, M{{"x", "5 g"}}, {}), Error);
    CHECK_THROWS_AS(NormalizationRuleSet(M{{"g", "grams"}}, {}, M{{"gx", "g x"}}), Error);
    CHECK_THROWS_AS(NormalizationRuleSet(M{{"g", "grams"}}, M{{"ga", "grams per acre"}}, {}), Error);
    CHECK_THROWS_AS(NormalizationRuleSet(M{{"g", "grams"}}, {}, {}, {"G"}), Error);
    CHECK_NOTHROW(NormalizationRuleSet(M{{"g", "grams"}}, M{{"dap", "dap"}}, {}, {"Salem"}));
}

TEST_CASE("lexicon files") {
    testsupport::TempDir dir;
    testsupport::write_text(dir / "bad.tsv", "# comment\nkg kilograms\n");
    CHECK_THROWS_AS(read_lexicon(dir / "bad.tsv"), Error);
    testsupport::write_text(dir / "ok.tsv", "# comment\n\nkg\tkilograms\r\n");
    CHECK(read_lexicon(dir / "ok.tsv") == std::map<std::string, std::string>{{"kg", "kilograms"}});
    CHECK_THROWS_AS(NormalizationRuleSet::load(dir / "nowhere"), Error);
}

TEST_CASE("quantities from a thiodicarb answer") {
    auto q = parse_quantities("spray thiodicarb 2 grams per litre of water", shipped());
    REQUIRE(q.size() == 1);
    CHECK(q[0].value == 2.0);
    CHECK(q[0].unit == "grams");
    CHECK(q[0].per_unit == std::optional<std::string>("litre"));
    CHECK(parse_quantities("hello world", shipped()).empty());
}

TEST_CASE("quantities from the top dressing answer") {
    auto q = parse_quantities(
        "apply urea 25 kilograms potash 15 kilograms micronutrient mixture 5 kilograms per acre", shipped());
    REQUIRE(q.size() == 3);
    CHECK(q[0] == QuantityToken{25.0, "25", "kilograms", std::nullopt});
    CHECK(q[1] == QuantityToken{15.0, "15", "kilograms", std::nullopt});
    CHECK(q[2] == QuantityToken{5.0, "5", "kilograms", std::string("acre")});
}

TEST_CASE("phone numbers are never quantities") {
    auto q = parse_quantities("call 9876543210 grams or 0422-2453578 litre then use 2.5 litre", shipped());
    REQUIRE(q.size() == 1);
    CHECK(q[0].value == 2.5);
    CHECK(q[0].literal == "2.5");
}

TEST_CASE("property: quantities parse from normalized random text") {
    Gen g(5);
    for (int i = 0; i < 500; ++i) {
        const auto t = normalize_text(g.messy_text(), shipped());
        for (const auto& q : parse_quantities(t, shipped())) {
            CHECK(q.value >= 0.0);
            CHECK(shipped().canonical_units().count(q.unit) == 1);
            CHECK(text::is_number(q.literal));
        }
    }
}

TEST_CASE("neemcake is flagged against frequent neem and cake") {
    std::vector<TextRecord> corpus;
    for (int i = 0; i < 12; ++i) corpus.push_back({"n" + std::to_string(i), "apply neem oil and cake mix"});
    corpus.push_back({"x", "apply neemcake 10 kilograms"});
    auto flags = detect_runons(corpus);
    REQUIRE(flags.size() == 1);
    CHECK(flags[0].record_id == "x");
    CHECK(flags[0].token == "neemcake");
    CHECK(flags[0].suggested_split == std::optional<std::string>("neem cake"));
    CHECK(flags[0].begin == 6);
    CHECK(flags[0].end == 14);
    CHECK(std::isfinite(flags[0].score));
    CHECK(flags[0].score >= 0.0);
}

TEST_CASE("cropseason: exactly one flag") {
    std::vector<TextRecord> corpus;
    for (int i = 0; i < 50; ++i) corpus.push_back({"c" + std::to_string(i), "crop"});
    for (int i = 0; i < 50; ++i) corpus.push_back({"s" + std::to_string(i), "season"});
    corpus.push_back({"target", "cropseason"});
    auto flags = detect_runons(corpus);
    auto oracle = runon_oracle(corpus, 2, 10, 2);
    REQUIRE(oracle.size() == 1);
    REQUIRE(flags.size() == 1);
    CHECK(flags[0].suggested_split == std::optional<std::string>("crop season"));
    CHECK(oracle[0].valid_splits.count(*flags[0].suggested_split) == 1);
}

TEST_CASE("in-lexicon corpus yields no flags") {
    std::vector<TextRecord> corpus{{"a", repeat("spray neem oil", 20)}, {"b", "apply urea"}};
    CHECK(detect_runons(corpus).empty());
}

TEST_CASE("run-on argument checks") {
    std::vector<TextRecord> corpus{{"a", "x"}};
    CHECK_THROWS_AS(detect_runons({}, {}), Error);
    RunOnOptions bad;
    bad.order = 0;
    CHECK_THROWS_AS(detect_runons(corpus, bad), Error);
    bad.order = 6;
    CHECK_THROWS_AS(detect_runons(corpus, bad), Error);
}

TEST_CASE("property: detector agrees with the brute-force bisection oracle") {
    const std::vector<std::string> vocab = {"neem", "cake", "leaf", "folder", "stem", "borer", "crop", "season",
                                            "zinc", "water", "spray", "urea", "ab", "ba"};
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Gen g(seed);
        std::vector<TextRecord> corpus;
        const auto n = g.between(1, 40);
        for (std::size_t i = 0; i < n; ++i) {
            std::string t;
            for (std::size_t k = 0, m = g.between(1, 12); k < m; ++k) {
                if (k) t += g.coin(0.9) ? " " : ", ";
                if (g.coin(0.1)) t += g.pick(vocab) + g.pick(vocab);  // fused
                else if (g.coin(0.05)) t += g.word(2, 6);
                else t += g.pick(vocab);
            }
            corpus.push_back({"r" + std::to_string(i), t});
        }
        RunOnOptions opt;
        opt.order = static_cast<int>(g.between(1, 5));
        opt.min_part_freq = g.between(1, 12);
        auto flags = detect_runons(corpus, opt);
        auto oracle = runon_oracle(corpus, opt.max_token_freq, opt.min_part_freq, opt.min_part_len);
        REQUIRE(flags.size() == oracle.size());

        std::map<std::pair<std::string, std::size_t>, const OracleHit*> by_pos;
        for (const auto& h : oracle) by_pos[{h.record_id, h.begin}] = &h;
        for (std::size_t i = 0; i < flags.size(); ++i) {
            const auto& f = flags[i];
            auto it = by_pos.find({f.record_id, f.begin});
            REQUIRE(it != by_pos.end());
            CHECK(it->second->token == f.token);
            REQUIRE(f.suggested_split);
            CHECK(it->second->valid_splits.count(*f.suggested_split) == 1);
            CHECK(std::isfinite(f.score));
            CHECK(f.score >= 0.0);
            if (i) CHECK(flags[i - 1].score >= f.score);
        }
    }
}

TEST_CASE("apply_flags replaces accepted spans left to right") {
    RunOnFlag f{"r", "neemcake", 6, 14, 1.0, std::string("neem cake")};
    CHECK(apply_flags("apply neemcake", std::vector<RunOnFlag>{f}) == "apply neem cake");
    CHECK(apply_flags("apply neemcake", {}) == "apply neemcake");

    const std::string t = "neemcake and cropseason";
    std::vector<RunOnFlag> two{{"r", "cropseason", 13, 23, 2.0, std::string("crop season")},
                               {"r", "neemcake", 0, 8, 1.0, std::string("neem cake")}};
    CHECK(apply_flags(t, two) == "neem cake and crop season");

    std::vector<RunOnFlag> overlap{{"r", "", 0, 8, 1.0, std::string("a b")}, {"r", "", 4, 10, 1.0, std::string("c d")}};
    CHECK_THROWS_AS(apply_flags(t, overlap), Error);
    std::vector<RunOnFlag> outside{{"r", "", 20, 40, 1.0, std::string("a b")}};
    CHECK_THROWS_AS(apply_flags(t, outside), Error);
}

TEST_CASE("flag export line") {
    RunOnFlag f{"7#query_text", "neemcake", 6, 14, 0.5, std::string("neem cake")};
    CHECK(to_json_line(f) ==
          R"({"record_id":"7#query_text","token":"neemcake","span":[6,14],"score":0.5,"suggestion":"neem cake"})");
}
