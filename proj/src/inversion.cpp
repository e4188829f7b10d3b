#include "selectiv/inversion.hpp"

#include "selectiv/error.hpp"
#include "selectiv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace selectiv {

double Interval::width() const {
    if (lower_unbounded || upper_unbounded) return std::numeric_limits<double>::infinity();
    return upper - lower;
}

namespace {

class Evaluator {
public:
    Evaluator(const PvalueFunction& f, unsigned threads) : f_(f), threads_(threads) {}

    void evaluate(const std::vector<double>& betas) {
        std::vector<GridPoint> fresh(betas.size());
        const std::uint64_t base = next_index_;
        next_index_ += betas.size();
        parallel_for(betas.size(), threads_, [&](std::size_t i) {
            fresh[i] = {betas[i], f_(betas[i], base + i)};
        });
        points_.insert(points_.end(), fresh.begin(), fresh.end());
        std::sort(points_.begin(), points_.end(), [](const GridPoint& a, const GridPoint& b) { return a.beta0 < b.beta0; });
    }

    double evaluate_one(double beta) {
        const double p = f_(beta, next_index_++);
        points_.push_back({beta, p});
        std::sort(points_.begin(), points_.end(), [](const GridPoint& a, const GridPoint& b) { return a.beta0 < b.beta0; });
        return p;
    }

    const std::vector<GridPoint>& points() const { return points_; }

private:
    const PvalueFunction& f_;
    unsigned threads_;
    std::uint64_t next_index_ = 0;
    std::vector<GridPoint> points_;
};

std::vector<double> linspace(double a, double b, int count) {
    std::vector<double> out(static_cast<std::size_t>(count));
    if (count == 1) {
        out[0] = 0.5 * (a + b);
        return out;
    }
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = a + (b - a) * i / (count - 1);
    return out;
}

void validate(double alpha, const GridSpec& spec) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1]");
    if (spec.points < 2 || spec.expansion <= 1.0 || spec.unbounded_at <= 0.0 || spec.expansion_points < 1) {
        throw Error(ErrorCode::invalid_argument, "invalid CI grid specification");
    }
}

// Hull of the retained points plus bisection refinement of each bounded end.
InversionResult finish(Evaluator& ev, double alpha, const GridSpec& spec, bool lower_unbounded, bool upper_unbounded) {
    InversionResult result;
    const auto& pts = ev.points();
    const auto argmax = std::max_element(pts.begin(), pts.end(),
                                         [](const GridPoint& a, const GridPoint& b) { return a.pvalue < b.pvalue; });
    std::ptrdiff_t first = -1, last = -1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].pvalue >= alpha) {
            if (first < 0) first = static_cast<std::ptrdiff_t>(i);
            last = static_cast<std::ptrdiff_t>(i);
        }
    }
    if (alpha >= 1.0 || first < 0) {
        result.degenerate = true;
        result.interval = {argmax->beta0, argmax->beta0, false, false};
        result.evaluated = pts;
        return result;
    }
    double lower = pts[static_cast<std::size_t>(first)].beta0;
    double upper = pts[static_cast<std::size_t>(last)].beta0;
    if (!lower_unbounded && first > 0) {
        double excluded = pts[static_cast<std::size_t>(first - 1)].beta0;
        for (int k = 0; k < spec.refine_steps; ++k) {
            const double mid = 0.5 * (excluded + lower);
            if (ev.evaluate_one(mid) >= alpha) lower = mid;
            else excluded = mid;
        }
    }
    // Re-locate the upper end: evaluate_one re-sorts the point list.
    if (!upper_unbounded) {
        const auto& now = ev.points();
        auto it = std::find_if(now.begin(), now.end(), [&](const GridPoint& g) { return g.beta0 > upper; });
        if (it != now.end()) {
            double excluded = it->beta0;
            for (int k = 0; k < spec.refine_steps; ++k) {
                const double mid = 0.5 * (upper + excluded);
                if (ev.evaluate_one(mid) >= alpha) upper = mid;
                else excluded = mid;
            }
        }
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    result.interval = {lower_unbounded ? -inf : lower, upper_unbounded ? inf : upper, lower_unbounded, upper_unbounded};
    result.evaluated = ev.points();
    return result;
}

} // namespace

InversionResult invert_pvalue(const PvalueFunction& pvalue, double center, double se, double alpha,
                              const GridSpec& spec, unsigned threads) {
    validate(alpha, spec);
    if (!std::isfinite(center) || !(se > 0.0) || !std::isfinite(se)) {
        throw Error(ErrorCode::invalid_argument, "CI grid needs a finite center and positive standard error");
    }
    Evaluator ev(pvalue, threads);
    const double half = spec.half_width_se * se;
    ev.evaluate(linspace(center - half, center + half, spec.points));

    bool lower_unbounded = false, upper_unbounded = false;
    bool lower_done = false, upper_done = false;
    for (int round = 0;; ++round) {
        const auto& pts = ev.points();
        const bool any_retained = std::any_of(pts.begin(), pts.end(), [&](const GridPoint& g) { return g.pvalue >= alpha; });
        if (!any_retained || alpha >= 1.0) break;
        const GridPoint left = pts.front();
        const GridPoint right = pts.back();
        if (!lower_done && left.pvalue < alpha) lower_done = true;
        if (!upper_done && right.pvalue < alpha) upper_done = true;
        if (!lower_done && std::abs(left.beta0) >= spec.unbounded_at) lower_unbounded = lower_done = true;
        if (!upper_done && std::abs(right.beta0) >= spec.unbounded_at) upper_unbounded = upper_done = true;
        if (lower_done && upper_done) break;
        if (round >= spec.max_rounds) {
            throw Error(ErrorCode::grid_exhausted, "CI grid expansion did not terminate within the round cap");
        }
        std::vector<double> block;
        if (!lower_done) {
            double outer = center - spec.expansion * (center - left.beta0);
            outer = std::max(outer, std::min(-spec.unbounded_at, left.beta0 - 1.0));
            auto add = linspace(outer, left.beta0, spec.expansion_points + 1);
            block.insert(block.end(), add.begin(), add.end() - 1);
        }
        if (!upper_done) {
            double outer = center + spec.expansion * (right.beta0 - center);
            outer = std::min(outer, std::max(spec.unbounded_at, right.beta0 + 1.0));
            auto add = linspace(right.beta0, outer, spec.expansion_points + 1);
            block.insert(block.end(), add.begin() + 1, add.end());
        }
        ev.evaluate(block);
    }
    return finish(ev, alpha, spec, lower_unbounded, upper_unbounded);
}

InversionResult invert_on_grid(const PvalueFunction& pvalue, const std::vector<double>& grid, double alpha,
                               const GridSpec& spec, unsigned threads) {
    validate(alpha, spec);
    if (grid.empty()) throw Error(ErrorCode::invalid_argument, "empty CI grid");
    Evaluator ev(pvalue, threads);
    ev.evaluate(grid);
    return finish(ev, alpha, spec, false, false);
}

} // namespace selectiv
