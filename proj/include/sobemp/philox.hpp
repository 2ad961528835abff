#pragma once

// Counter-based random number generation (Philox4x32-10) with derived
// per-replica streams. Counter-based generators make parallel Monte Carlo
// replicas reproducible: stream k of seed s is a pure function of (s, k, n)
// with no shared mutable state, so replicas can run on any number of threads
// and still produce bit-identical draws.

#include <array>
#include <cmath>
#include <cstdint>

namespace sobemp::rng {

struct Philox4x32Block {
    std::array<std::uint32_t, 4> v;
};

/// One Philox4x32-10 block: encrypt a 128-bit counter under a 64-bit key.
inline Philox4x32Block philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                     std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return {ctr};
}

/// Streaming interface over Philox blocks: uniforms, normals (Box-Muller).
/// A stream is identified by a 64-bit seed; replica streams are derived as
/// seed XOR replica-index by the callers that fan out replicas.
class PhiloxStream {
  public:
    explicit PhiloxStream(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed),
               static_cast<std::uint32_t>(seed >> 32)} {}

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return block_.v[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    /// Uniform double in [0, 1), 53 random mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; draws come in deterministic pairs.
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        // u1 in (0,1] so log() is finite.
        const double u1 = 1.0 - next_double();
        const double u2 = next_double();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

  private:
    void refill() {
        block_ = philox4x32_10({static_cast<std::uint32_t>(counter_),
                                static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u},
                               key_);
        ++counter_;
        pos_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t counter_ = 0;
    Philox4x32Block block_{};
    int pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

/// Stream seed for a replica: the documented derivation is seed XOR index.
/// Callers enumerate replicas globally within an experiment so indices are
/// never reused across the N-grid.
inline std::uint64_t replica_seed(std::uint64_t base_seed, std::uint64_t replica_index) {
    return base_seed ^ replica_index;
}

} // namespace sobemp::rng
