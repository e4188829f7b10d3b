#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace selectiv {

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    bool lower_unbounded = false;
    bool upper_unbounded = false;

    bool contains(double x) const {
        return (lower_unbounded || x >= lower) && (upper_unbounded || x <= upper);
    }
    double width() const;
};

struct GridSpec {
    int points = 201;
    double half_width_se = 8.0;
    double expansion = 2.0;
    double unbounded_at = 1e5;
    int max_rounds = 64;
    int expansion_points = 50; // points added per side per expansion round
    int refine_steps = 20;     // bisection steps per endpoint; 0 disables
};

struct GridPoint {
    double beta0 = 0.0;
    double pvalue = 0.0;
};

struct InversionResult {
    Interval interval;
    std::vector<GridPoint> evaluated; // sorted by beta0
    bool degenerate = false;          // alpha = 1 or nothing retained: point at argmax p
};

/// p-value oracle: (beta0, evaluation index) -> p(beta0). The index is unique
/// per evaluation and should key any random substream, so results do not
/// depend on evaluation order or thread count.
using PvalueFunction = std::function<double(double, std::uint64_t)>;

/// Hull of {beta0 : p(beta0) >= alpha} over a grid of `spec.points` values on
/// center +- half_width_se * se, expanded outward while the outermost point is
/// retained, then refined by bisection. Sides are flagged unbounded once the
/// retained set reaches |beta0| >= unbounded_at. Grid evaluations run on up
/// to `threads` workers.
InversionResult invert_pvalue(const PvalueFunction& pvalue, double center, double se, double alpha,
                              const GridSpec& spec = {}, unsigned threads = 1);

/// Like invert_pvalue but evaluated on a caller-supplied grid (no expansion);
/// the hull is taken over retained grid points and refined by bisection.
InversionResult invert_on_grid(const PvalueFunction& pvalue, const std::vector<double>& grid, double alpha,
                               const GridSpec& spec = {}, unsigned threads = 1);

} // namespace selectiv
