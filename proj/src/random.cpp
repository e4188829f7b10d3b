#include "selectiv/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace selectiv {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(product >> 32);
    lo = static_cast<std::uint32_t>(product);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Standard normal CDF and its inverse for the inverse-CDF branch.
double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double phi_quantile(double p) {
    // Acklam's rational approximation refined by one Halley step.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= 1 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    const double e = phi_cdf(x) - p;
    const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
    return x - u / (1 + x * u / 2);
}

// Standardized truncation [a, b] with a > 0 (right tail).
double right_tail_truncated(Rng& rng, double a, double b) {
    // Uniform proposal is efficient when the interval is short relative to 1/a.
    if (std::isfinite(b) && b - a < 2.0 / (a + std::sqrt(a * a + 4.0)) * 2.0) {
        for (;;) {
            const double x = a + (b - a) * rng.uniform();
            if (std::log(rng.uniform()) <= (a * a - x * x) / 2) return x;
        }
    }
    const double rate = (a + std::sqrt(a * a + 4.0)) / 2;
    for (;;) {
        const double x = a - std::log(rng.uniform()) / rate;
        if (x > b) continue;
        if (std::log(rng.uniform()) <= -(x - rate) * (x - rate) / 2) return x;
    }
}

} // namespace

Philox4x32::Philox4x32(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

Philox4x32::counter_type Philox4x32::block(counter_type ctr, key_type key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

void Philox4x32::refill() {
    const counter_type ctr = {static_cast<std::uint32_t>(block_index_), static_cast<std::uint32_t>(block_index_ >> 32),
                              static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const key_type key = {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    buffer_ = block(ctr, key);
    ++block_index_;
    position_ = 0;
}

Philox4x32::result_type Philox4x32::operator()() {
    if (position_ == 4) refill();
    return buffer_[position_++];
}

std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t child) {
    return splitmix64(splitmix64(parent) ^ (child + 0x632BE59BD9B4E019ull));
}

std::uint64_t Rng::next64() {
    const std::uint64_t hi = engine_();
    const std::uint64_t lo = engine_();
    return (hi << 32) | lo;
}

double Rng::uniform() {
    return (static_cast<double>(next64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index size) {
    Eigen::VectorXd out(size);
    for (Eigen::Index i = 0; i < size; ++i) out[i] = normal();
    return out;
}

Rng Rng::substream(std::uint64_t id) const {
    return Rng(engine_.seed(), derive_stream(engine_.stream(), id));
}

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
    const double a = (lo - mean) / sd;
    const double b = (hi - mean) / sd;
    double z;
    if (a > 0) {
        z = right_tail_truncated(rng, a, b);
    } else if (b < 0) {
        z = -right_tail_truncated(rng, -b, -a);
    } else if (b - a > 2.5 || !std::isfinite(b - a)) {
        // Interval straddles zero and is wide: plain rejection accepts often.
        do {
            z = rng.normal();
        } while (z < a || z > b);
    } else {
        const double fa = phi_cdf(a);
        const double fb = phi_cdf(b);
        z = phi_quantile(fa + (fb - fa) * rng.uniform());
        z = std::clamp(z, a, b);
    }
    return mean + sd * z;
}

} // namespace selectiv
