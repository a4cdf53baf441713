#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace xrec {

inline constexpr std::string_view kToolVersion = "0.1.0";

// 64-bit FNV-1a. Used for cache keys, content hashes and seed derivation;
// stable across platforms and standard libraries, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_hex(std::uint64_t value);

// Deterministic RNG with a fixed, documented sequence. All sampling that
// must reproduce bit-for-bit (splits, negatives, init) goes through this.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n) without modulo bias.
    std::uint64_t next_below(std::uint64_t n);

    // Standard normal via Box-Muller; second value of each pair is cached.
    double next_normal();

private:
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

// Derives an independent stream seed from a base seed and a role tag.
std::uint64_t mix_seed(std::uint64_t base, std::string_view tag);
std::uint64_t mix_seed(std::uint64_t base, std::string_view tag, std::uint64_t n);

template <typename T>
void deterministic_shuffle(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// First m elements of a partial Fisher-Yates pass over the pool.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t m, SplitMix64& rng) {
    if (m > pool.size()) m = pool.size();
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(m);
    return pool;
}

std::string read_text_file(const std::filesystem::path& path);

// Writes via a temp file in the same directory, then renames over the target.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string base64_encode(std::string_view bytes);

// FNV-1a over the file's bytes, streamed.
std::uint64_t hash_file(const std::filesystem::path& path);

std::string now_iso8601();

std::vector<std::string> split_string(std::string_view s, char delim);
std::string trim(std::string_view s);

}  // namespace xrec
