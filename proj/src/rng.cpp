#include "waffle/rng.hpp"

#include <cmath>

#include "waffle/error.hpp"

namespace waffle {

namespace {

// splitmix64 finalizer: bijective 64-bit mix with full avalanche.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint32_t round, std::uint32_t stream_id) {
    key_ = mix64(seed);
    key_ = mix64(key_ ^ ((static_cast<std::uint64_t>(round) << 32) | stream_id));
}

std::uint64_t RngStream::next_u64() {
    return mix64(key_ + counter_++);
}

double RngStream::uniform() {
    // 53 mantissa bits shifted into (0,1): ((x >> 11) + 0.5) * 2^-53.
    const std::uint64_t x = next_u64();
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

std::vector<double> RngStream::uniforms(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = uniform();
    return out;
}

double RngStream::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw ContractError("RngStream::below(0)");
    // Modulo bias is < n / 2^64, irrelevant at the scales used here.
    return next_u64() % n;
}

}  // namespace waffle
