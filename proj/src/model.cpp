#include "selectiv/model.hpp"

#include "selectiv/error.hpp"

#include <cmath>
#include <sstream>

namespace selectiv {

namespace {

constexpr double kRankRatio = 1e-10;
constexpr double kEigenFloor = 1e-12;

double singular_ratio(const Eigen::MatrixXd& m) {
    if (m.cols() == 0) return 1.0;
    Eigen::MatrixXd scaled = m;
    for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
        const double norm = scaled.col(j).norm();
        if (norm == 0.0) return 0.0;
        scaled.col(j) /= norm;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(scaled);
    const auto& sv = svd.singularValues();
    return sv(sv.size() - 1) / sv(0);
}

std::string join(const std::vector<std::string>& names) {
    std::ostringstream out;
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? ", " : "") << names[i];
    return out.str();
}

std::vector<std::string> default_names(const std::string& prefix, Eigen::Index count) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < count; ++j) names.push_back(prefix + std::to_string(j + 1));
    return names;
}

Eigen::MatrixXd centered(const Eigen::MatrixXd& m) {
    return m.rowwise() - m.colwise().mean();
}

} // namespace

std::vector<std::string> dependent_columns(const Eigen::MatrixXd& m, const std::vector<std::string>& names) {
    std::vector<std::string> offending;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        Eigen::MatrixXd trial(m.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
        for (std::size_t k = 0; k < kept.size(); ++k) trial.col(static_cast<Eigen::Index>(k)) = m.col(kept[k]);
        trial.col(trial.cols() - 1) = m.col(j);
        if (singular_ratio(trial) < kRankRatio) {
            offending.push_back(j < static_cast<Eigen::Index>(names.size()) ? names[j] : "column " + std::to_string(j + 1));
        } else {
            kept.push_back(j);
        }
    }
    return offending;
}

IVDataset prepare(const IVDataset& raw) {
    const Eigen::Index n = raw.y.size();
    const Eigen::Index p = raw.z.cols();
    if (raw.d.size() != n || raw.z.rows() != n || (raw.x && raw.x->rows() != n)) {
        throw Error(ErrorCode::dimension_mismatch, "Y, D, Z and X must have the same number of rows");
    }
    if (p < 1) throw Error(ErrorCode::dimension_mismatch, "at least one instrument is required");
    const Eigen::Index k = raw.x ? raw.x->cols() : 0;
    if (n <= p + k) throw Error(ErrorCode::dimension_mismatch, "need n > p + k observations");

    const auto z_names = raw.z_names.size() == static_cast<std::size_t>(p) ? raw.z_names : default_names("z", p);
    const auto x_names = raw.x_names.size() == static_cast<std::size_t>(k) ? raw.x_names : default_names("x", k);

    IVDataset out;
    out.z_names = z_names;
    out.y = raw.y.array() - raw.y.mean();
    out.d = raw.d.array() - raw.d.mean();
    out.z = centered(raw.z);

    // Constant covariates vanish under centering; the intercept already covers them.
    Eigen::MatrixXd xc;
    std::vector<std::string> x_kept;
    if (raw.x) {
        const Eigen::MatrixXd xall = centered(*raw.x);
        std::vector<Eigen::Index> cols;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double scale = raw.x->col(j).cwiseAbs().maxCoeff();
            if (xall.col(j).norm() > 1e-12 * std::max(scale, 1.0) * std::sqrt(static_cast<double>(n))) cols.push_back(j);
        }
        xc.resize(n, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            xc.col(static_cast<Eigen::Index>(c)) = xall.col(cols[c]);
            x_kept.push_back(x_names[cols[c]]);
        }
    }

    Eigen::MatrixXd joint(n, p + xc.cols());
    joint << out.z, xc;
    if (singular_ratio(joint) < kRankRatio) {
        std::vector<std::string> names = z_names;
        names.insert(names.end(), x_kept.begin(), x_kept.end());
        throw Error(ErrorCode::rank_deficient, "[Z X] is not of full column rank; dependent columns: " +
                                                   join(dependent_columns(joint, names)));
    }

    if (xc.cols() > 0) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(xc);
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, xc.cols());
        out.y -= q * (q.transpose() * out.y);
        out.d -= q * (q.transpose() * out.d);
        out.z -= q * (q.transpose() * out.z);
    }
    return out;
}

Eigen::MatrixXd inverse_sqrt_spd(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    const Eigen::VectorXd inv_root = eig.eigenvalues().cwiseMax(kEigenFloor).cwiseSqrt().cwiseInverse();
    return eig.eigenvectors() * inv_root.asDiagonal() * eig.eigenvectors().transpose();
}

IVSummary summarize(const IVDataset& prepared) {
    IVSummary s;
    s.n = prepared.n();
    s.p = prepared.p();
    if (s.n <= s.p) throw Error(ErrorCode::dimension_mismatch, "need n > p");
    const Eigen::MatrixXd ztz = prepared.z.transpose() * prepared.z;
    s.ztz_inv_sqrt = inverse_sqrt_spd(ztz);
    s.s_y = s.ztz_inv_sqrt * (prepared.z.transpose() * prepared.y);
    s.s_d = s.ztz_inv_sqrt * (prepared.z.transpose() * prepared.d);
    s.gamma_hat = s.ztz_inv_sqrt * s.s_d;
    s.yy = prepared.y.squaredNorm();
    s.dd = prepared.d.squaredNorm();
    s.yd = prepared.y.dot(prepared.d);
    return s;
}

double tsls_estimate(const IVSummary& s) {
    const double denom = s.dpzd();
    if (!(denom > 1e-12 * std::max(s.dd, 1e-300))) {
        throw Error(ErrorCode::degenerate_first_stage, "D'P_Z D is numerically zero");
    }
    return s.dpzy() / denom;
}

Eigen::Matrix2d sigma_from_omega(const Eigen::Matrix2d& omega, double beta) {
    Eigen::Matrix2d binv;
    binv << 1.0, -beta, 0.0, 1.0;
    return binv * omega * binv.transpose();
}

Eigen::Matrix2d omega_from_sigma(const Eigen::Matrix2d& sigma, double beta) {
    Eigen::Matrix2d b;
    b << 1.0, beta, 0.0, 1.0;
    return b * sigma * b.transpose();
}

ModelEstimates covariance_estimates(const IVSummary& s, double beta0) {
    ModelEstimates est;
    est.beta_tsls = tsls_estimate(s);
    Eigen::Matrix2d resid;
    resid << s.yy - s.ypzy(), s.yd - s.dpzy(), s.yd - s.dpzy(), s.dd - s.dpzd();
    est.omega_hat = resid / s.dof();
    if (!(est.omega_hat(0, 0) > 0.0 && est.omega_hat(1, 1) > 0.0 && est.omega_hat.determinant() > 0.0)) {
        throw Error(ErrorCode::not_positive_definite, "reduced-form residual covariance is not positive definite");
    }
    // Written out rather than via the mapping so both routes can be checked against each other.
    const double rss_u = resid(0, 0) - 2 * beta0 * resid(0, 1) + beta0 * beta0 * resid(1, 1);
    const double cross = resid(0, 1) - beta0 * resid(1, 1);
    est.sigma_hat << rss_u, cross, cross, resid(1, 1);
    est.sigma_hat /= s.dof();
    est.sigma_beta = beta0;
    est.gamma_hat = s.gamma_hat;
    return est;
}

double tsls_standard_error(const IVSummary& s) {
    const ModelEstimates at_estimate = covariance_estimates(s, tsls_estimate(s));
    return std::sqrt(at_estimate.sigma_hat(0, 0) / s.dpzd());
}

} // namespace selectiv
