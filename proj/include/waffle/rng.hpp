#pragma once

#include <cstdint>
#include <vector>

namespace waffle {

// Counter-based deterministic generator. The stream is fully determined by
// (seed, round, stream_id, draw counter), so draws never depend on scheduling
// order, and a stream can be copied to replay a draw sequence.
//
// Reserved stream ids for non-client streams:
inline constexpr std::uint32_t kServerStream = 0xFFFFFFFFu;
inline constexpr std::uint32_t kPartitionStream = 0xFFFFFFFEu;
inline constexpr std::uint32_t kInitStream = 0xFFFFFFFDu;
inline constexpr std::uint32_t kEvalStream = 0xFFFFFFFCu;
inline constexpr std::uint32_t kDataStream = 0xFFFFFFFBu;

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint32_t round, std::uint32_t stream_id);

    std::uint64_t next_u64();

    // Uniform on the open interval (0,1); never returns an endpoint.
    double uniform();
    std::vector<double> uniforms(std::size_t n);

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal();

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates in-place shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t draws_taken() const { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace waffle
