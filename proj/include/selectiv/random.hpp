#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>

namespace selectiv {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// The 64-bit key is the user seed; the upper half of the counter selects an
/// independent stream and the lower half counts blocks within it.
class Philox4x32 {
public:
    using result_type = std::uint32_t;
    using counter_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// One application of the 10-round bijection (exposed for known-answer tests).
    static counter_type block(counter_type counter, key_type key);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_index_ = 0;
    counter_type buffer_{};
    int position_ = 4;
};

/// Mixes a parent stream id with a child index into a new stream id, so that
/// substreams keyed by (seed, grid index, chain) never collide in practice.
std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t child);

/// Random source used throughout the library: uniform and Gaussian variates
/// on top of a Philox stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : engine_(seed, stream) {}

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform();
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    Eigen::VectorXd normal_vector(Eigen::Index size);

    /// Independent generator for a sub-task; deterministic in (seed, stream, id).
    Rng substream(std::uint64_t id) const;

    std::uint64_t seed() const { return engine_.seed(); }
    std::uint64_t stream() const { return engine_.stream(); }

private:
    std::uint64_t next64();

    Philox4x32 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

/// Draw from N(mean, sd^2) restricted to [lo, hi] (either bound may be infinite).
/// Uses inverse-CDF or Robert's (1995) exponential/uniform rejection depending on
/// where the interval sits, so deep-tail truncations stay exact.
double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi);

} // namespace selectiv
