#pragma once

#include "selectiv/model.hpp"
#include "selectiv/random.hpp"
#include "selectiv/simulation.hpp"

#include <Eigen/Dense>

namespace selectiv::testing {

inline Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

// Three-point instance with Z = (-1, 0, 1).
inline IVDataset hand_instance(const Eigen::Vector3d& y, const Eigen::Vector3d& d) {
    IVDataset raw;
    raw.y = y;
    raw.d = d;
    raw.z = Eigen::MatrixXd(3, 1);
    raw.z << -1.0, 0.0, 1.0;
    return raw;
}

inline IVSummary simulated_summary(double r, double sigma12, Eigen::Index n, Eigen::Index p, std::uint64_t seed,
                                   std::uint64_t stream = 0) {
    Rng rng(seed, stream);
    return summarize(generate(DGPConfig::equal_strength(r, sigma12, n, p, 1.0, seed), rng));
}

} // namespace selectiv::testing
