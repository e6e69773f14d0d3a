#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace sepp {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The 64-bit key selects the experiment (seed), the upper 64 counter bits select
/// the stream (replication index) and the lower 64 bits count draws. Any
/// replication can therefore be regenerated on its own, on any worker.
class Philox4x32 {
public:
    using result_type = std::uint64_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    Philox4x32(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream)
    {
    }

    /// One application of the ten-round bijection.
    static Block bijection(Block ctr, Key key) noexcept
    {
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

    result_type operator()() noexcept
    {
        if (lane_ == 2) refill();
        return buffer_[lane_++];
    }

    /// Uniform on (0, 1]: never returns 0, so -log(u) is finite.
    double uniform_open0() noexcept
    {
        return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Uniform on [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard exponential variate.
    double exponential() noexcept { return -std::log(uniform_open0()); }

    std::uint64_t stream() const noexcept { return stream_; }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    void refill() noexcept
    {
        const Block ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        ++counter_;
        const Block out = bijection(ctr, key_);
        buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
        buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
        lane_ = 0;
    }

    Key key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int lane_ = 2;
};

/// Independent stream for replication `index` of an experiment seeded with `master_seed`.
inline Philox4x32 split(std::uint64_t master_seed, std::uint64_t index) noexcept
{
    return Philox4x32(master_seed, index);
}

} // namespace sepp
