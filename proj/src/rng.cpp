#include "stabgen/rng.hpp"

#include <cmath>

namespace stabgen {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t RngStream::mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

std::uint64_t RngStream::hash(std::string_view text) {
    // FNV-1a
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

RngStream::RngStream(std::uint64_t seed, std::string_view cell_path, std::uint64_t sample_index,
                     std::uint64_t case_index, StreamPurpose purpose) {
    std::uint64_t key = splitmix64(seed);
    key = mix(key, hash(cell_path));
    key = mix(key, sample_index);
    key = mix(key, case_index);
    key = mix(key, static_cast<std::uint64_t>(purpose));
    engine_.seed(key);
}

RngStream::RngStream(std::uint64_t raw_seed) { engine_.seed(splitmix64(raw_seed)); }

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) {
    const double v = lo + (hi - lo) * uniform();
    return v < hi ? v : std::nextafter(hi, lo);
}

double RngStream::normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }

}  // namespace stabgen
