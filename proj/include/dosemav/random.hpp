#pragma once

// Counter-based random streams (Philox4x32-10, Salmon et al. SC'11).
//
// A stream is identified by a 64-bit key (the base seed) and three 32-bit
// stream ids (scenario, replication, resample). The fourth counter word
// walks through the stream. Any stream can be regenerated in isolation, so
// results never depend on how work is scheduled across threads.

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace dosemav {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// One Philox4x32 block with 10 rounds.
PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept;

struct StreamId {
    std::uint64_t seed = 0;
    std::uint32_t scenario = 0;
    std::uint32_t replication = 0;
    std::uint32_t resample = 0;
};

/// UniformRandomBitGenerator over a single keyed Philox stream.
class RandomStream {
public:
    using result_type = std::uint32_t;

    RandomStream() : RandomStream(StreamId{}) {}
    explicit RandomStream(StreamId id) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        if (used_ == 4) {
            block_ = philox4x32_10(counter_, key_);
            ++counter_[0];
            used_ = 0;
        }
        return block_[used_++];
    }

    /// Uniform integer in [0, n) by Lemire's multiply-and-reject method.
    std::uint32_t below(std::uint32_t n) noexcept;

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept;

    double normal() { return normal_(*this); }

    const StreamId& id() const noexcept { return id_; }

private:
    StreamId id_;
    PhiloxKey key_{};
    PhiloxCounter counter_{};
    PhiloxCounter block_{};
    unsigned used_ = 4;
    std::normal_distribution<double> normal_;
};

}  // namespace dosemav
