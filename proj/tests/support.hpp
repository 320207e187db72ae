#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path data_dir() { return AGRIQA_TEST_DATA; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "agriqa") {
        std::random_device rd;
        path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << body;
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

// Hand-rolled generators. Everything is driven by an explicit seed so a
// failing case can be replayed.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    std::size_t between(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[below(v.size())];
    }

    std::string word(std::size_t min_len = 1, std::size_t max_len = 8) {
        static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
        std::string w;
        for (std::size_t i = 0, n = between(min_len, max_len); i < n; ++i) w += letters[below(letters.size())];
        return w;
    }

    std::string number() {
        std::string s = std::to_string(between(0, 999));
        if (coin(0.2)) s += "." + std::to_string(between(0, 99));
        return s;
    }

    /// Words from a small vocabulary so n-grams repeat.
    std::vector<std::string> tokens(const std::vector<std::string>& vocab, std::size_t min_n, std::size_t max_n) {
        std::vector<std::string> out;
        for (std::size_t i = 0, n = between(min_n, max_n); i < n; ++i) out.push_back(pick(vocab));
        return out;
    }

    /// Arbitrary text mixing letters, digits, punctuation, unit blobs, case
    /// and multibyte characters.
    std::string messy_text(std::size_t max_tokens = 12) {
        static const std::vector<std::string> pieces = {
            "5g", "10kg", "2ml", "5gmlit", "3.5lit", "DAP", "neemcake", "per", "ac", "/", "-", ",", ".",
            "Coimbatore", "mg", "kgs", "ppm", "ha", "0422-2453578", "9876543210", "é", "ü", "(", ")", "?", "!",
            "fym", "plz", "zincsulphate", "1.5", "50", "%", "Kg", "GM", "Lit", "x", "l"};
        std::string out;
        for (std::size_t i = 0, n = between(0, max_tokens); i < n; ++i) {
            if (i && coin(0.8)) out += coin(0.9) ? " " : "  ";
            switch (below(4)) {
                case 0: out += word(); break;
                case 1: out += number(); break;
                case 2: {
                    auto w = word();
                    if (coin()) w[0] = static_cast<char>(w[0] - 'a' + 'A');
                    out += w;
                    break;
                }
                default: out += pick(pieces); break;
            }
        }
        return out;
    }

    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace testsupport
