#include "stabds/inference.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "stabds/errors.hpp"

namespace stabds::inference {

namespace {

constexpr const char* kModule = "inference";

Eigen::MatrixXd treatment_design(const DemeanedPanel& panel, std::span<const int> S) {
    Eigen::MatrixXd W(panel.rows(), static_cast<Eigen::Index>(S.size()) + 1);
    W.col(0) = panel.d;
    for (std::size_t k = 0; k < S.size(); ++k) {
        const int j = S[k];
        if (j < 0 || j >= panel.covariates()) throw ConfigError(kModule, "selected index out of range");
        W.col(static_cast<Eigen::Index>(k) + 1) = panel.X.col(j);
    }
    return W;
}

Eigen::MatrixXd control_design(const DemeanedPanel& panel, std::span<const int> S) {
    Eigen::MatrixXd U(panel.rows(), static_cast<Eigen::Index>(S.size()));
    for (std::size_t k = 0; k < S.size(); ++k) U.col(static_cast<Eigen::Index>(k)) = panel.X.col(S[k]);
    return U;
}

// Throws NumericError naming the columns that fall outside the numerical rank.
Eigen::ColPivHouseholderQR<Eigen::MatrixXd> full_rank_qr(const Eigen::MatrixXd& W,
                                                         const std::vector<std::string>& names) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(W);
    qr.setThreshold(1e-10);
    if (W.rows() < W.cols() || qr.rank() < W.cols()) {
        std::ostringstream msg;
        msg << "design is rank deficient (rank " << qr.rank() << " of " << W.cols() << "); collinear columns:";
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < W.cols(); ++k) {
            const auto col = static_cast<std::size_t>(perm(k));
            msg << ' ' << (col < names.size() ? names[col] : "column " + std::to_string(col));
        }
        throw NumericError(kModule, msg.str());
    }
    return qr;
}

std::vector<std::string> design_names(const DemeanedPanel& panel, std::span<const int> S) {
    std::vector<std::string> names{"treatment"};
    for (int j : S)
        names.push_back(static_cast<std::size_t>(j) < panel.column_names.size() ? panel.column_names[j]
                                                                                : "x" + std::to_string(j + 1));
    return names;
}

// Inverse of the upper triangular factor of a thin QR of W.
Eigen::MatrixXd r_inverse(const Eigen::MatrixXd& W) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(W);
    const auto k = W.cols();
    const Eigen::MatrixXd R = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    return R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
}

}  // namespace

std::string se_kind_name(SeKind kind) { return kind == SeKind::design ? "design" : "hc3"; }

SeKind parse_se_kind(const std::string& name) {
    if (name == "design") return SeKind::design;
    if (name == "hc3") return SeKind::hc3;
    throw ConfigError(kModule, "unknown standard error kind '" + name + "' (valid: design, hc3)");
}

int fixed_effects_df(int n, int T, std::size_t selected) {
    return n * (T - 1) - static_cast<int>(selected) - 1;
}

CausalEstimate post_ols(const DemeanedPanel& panel, std::span<const int> S) {
    panel.validate();
    const Eigen::MatrixXd W = treatment_design(panel, S);
    const auto qr = full_rank_qr(W, design_names(panel, S));
    const Eigen::VectorXd coef = qr.solve(panel.y);

    CausalEstimate est;
    est.beta0 = coef(0);
    est.coefficients = coef.tail(coef.size() - 1);
    est.residuals = panel.y - W * coef;
    est.selected.assign(S.begin(), S.end());
    est.df = fixed_effects_df(panel.n, panel.T, S.size());
    if (est.df < 1) {
        std::ostringstream msg;
        msg << "degrees of freedom n(T-1) - |S| - 1 = " << est.df << " < 1";
        throw NumericError(kModule, msg.str());
    }
    return est;
}

double design_se(const Eigen::VectorXd& D, const Eigen::MatrixXd& U, const Eigen::VectorXd& residuals) {
    if (U.rows() != D.size() || residuals.size() != D.size())
        throw ConfigError(kModule, "design_se inputs differ in length");
    Eigen::VectorXd V = D;
    Eigen::VectorXd centred;
    Eigen::VectorXd Ve = V.cwiseProduct(residuals);
    if (U.cols() > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(U);
        V = D - U * qr.solve(D);
        Ve = V.cwiseProduct(residuals);
        centred = Ve - U * qr.solve(Ve);
    } else {
        centred = Ve;
    }
    const double vtv = V.squaredNorm();
    if (!(vtv > 1e-12 * std::max(D.squaredNorm(), std::numeric_limits<double>::min())))
        throw NumericError(kModule, "treatment is perfectly explained by the selected controls (V'V = 0)");
    const double G = centred.squaredNorm();
    return std::sqrt(G) / vtv;
}

double design_se(const DemeanedPanel& panel, std::span<const int> S, const CausalEstimate& estimate) {
    return design_se(panel.d, control_design(panel, S), estimate.residuals);
}

double hc3_se(const Eigen::MatrixXd& W, const Eigen::VectorXd& residuals, Eigen::Index index) {
    if (W.rows() != residuals.size()) throw ConfigError(kModule, "hc3_se inputs differ in length");
    const Eigen::MatrixXd Rinv = r_inverse(W);
    // Row `index` of (W'W)^-1 W' is row `index` of Rinv * Q'; build it as (W Rinv Rinv')'.
    const Eigen::MatrixXd Q = W * Rinv;  // orthonormal columns
    const Eigen::VectorXd a = Q * Rinv.row(index).transpose();
    double var = 0.0;
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
        const double h = Q.row(i).squaredNorm();
        if (h >= 1.0 - 1e-10) {
            std::ostringstream msg;
            msg << "leverage of row " << i << " equals 1; HC3 is undefined";
            throw NumericError(kModule, msg.str());
        }
        const double scaled = residuals(i) / (1.0 - h);
        var += a(i) * a(i) * scaled * scaled;
    }
    return std::sqrt(var);
}

double hc3_se(const DemeanedPanel& panel, std::span<const int> S, const CausalEstimate& estimate) {
    return hc3_se(treatment_design(panel, S), estimate.residuals, 0);
}

double classical_se(const Eigen::MatrixXd& W, const Eigen::VectorXd& residuals, Eigen::Index index, int df) {
    const Eigen::MatrixXd Rinv = r_inverse(W);
    const double sigma2 = residuals.squaredNorm() / df;
    return std::sqrt(sigma2 * Rinv.row(index).squaredNorm());
}

double two_sided_p(double t, int df) {
    if (df < 1) throw NumericError(kModule, "degrees of freedom must be at least 1");
    if (std::isinf(t)) return 0.0;
    boost::math::students_t_distribution<double> dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

double t_quantile(double prob, int df) {
    if (df < 1) throw NumericError(kModule, "degrees of freedom must be at least 1");
    boost::math::students_t_distribution<double> dist(df);
    return boost::math::quantile(dist, prob);
}

TTest t_test(const CausalEstimate& estimate, double null_value, SeKind kind, double alpha) {
    const double se = kind == SeKind::design ? estimate.se_design : estimate.se_hc3;
    if (!(se > 0.0)) throw NumericError(kModule, "standard error is zero; t statistic undefined");
    TTest out;
    out.t = (estimate.beta0 - null_value) / se;
    out.p = two_sided_p(out.t, estimate.df);
    out.reject = out.p < alpha;
    return out;
}

CausalEstimate estimate_effect(const DemeanedPanel& panel, std::span<const int> S, SeKind use, double level) {
    if (!(level > 0.0 && level < 1.0)) throw ConfigError(kModule, "confidence level must lie in (0, 1)");
    CausalEstimate est = post_ols(panel, S);
    est.se_design = design_se(panel, S, est);
    est.se_hc3 = hc3_se(panel, S, est);
    est.se_in_use = use;
    est.level = level;
    const double se = use == SeKind::design ? est.se_design : est.se_hc3;
    if (se > 0.0) {
        const TTest test = t_test(est, 0.0, use);
        est.t_stat = test.t;
        est.p_value = test.p;
    } else {
        est.t_stat = std::numeric_limits<double>::quiet_NaN();
        est.p_value = std::numeric_limits<double>::quiet_NaN();
    }
    const double q = t_quantile(0.5 + level / 2.0, est.df);
    est.ci = {est.beta0 - q * se, est.beta0 + q * se};
    return est;
}

InfluenceReport influence_diagnostics(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                                      std::vector<std::string> variables) {
    const auto N = design.rows();
    const auto k = design.cols();
    if (y.size() != N) throw ConfigError(kModule, "response and design differ in length");
    if (N - k - 1 < 1) throw NumericError(kModule, "too few observations for leave-one-out diagnostics");
    if (static_cast<Eigen::Index>(variables.size()) != k) throw ConfigError(kModule, "one name per design column");
    const auto qr = full_rank_qr(design, variables);
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd e = y - design * beta;
    const double sse = e.squaredNorm();

    const Eigen::MatrixXd Rinv = r_inverse(design);
    const Eigen::MatrixXd Q = design * Rinv;
    const Eigen::MatrixXd A = Rinv * Rinv.transpose();  // (X'X)^-1
    const Eigen::VectorXd sd_coef = A.diagonal().cwiseSqrt();
    const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());

    InfluenceReport out;
    out.variables = std::move(variables);
    out.dffits.resize(N);
    out.dfbetas.resize(k, N);
    out.threshold_dffits = std::sqrt(static_cast<double>(k)) / static_cast<double>(N);
    out.threshold_dfbetas = 2.0 / std::sqrt(static_cast<double>(N));
    out.xi.assign(static_cast<std::size_t>(k), 0);
    out.influential_rows.assign(static_cast<std::size_t>(N), false);

    for (Eigen::Index i = 0; i < N; ++i) {
        const double h = Q.row(i).squaredNorm();
        if (h >= 1.0 - 1e-12) {
            std::ostringstream msg;
            msg << "row " << i << " has leverage 1";
            throw NumericError(kModule, msg.str());
        }
        const double loo_var = std::max(0.0, (sse - e(i) * e(i) / (1.0 - h)) / static_cast<double>(N - k - 1));
        const double s_i = std::sqrt(loo_var);
        const Eigen::VectorXd shift = A * design.row(i).transpose() * (e(i) / (1.0 - h));
        if (s_i <= 1e-14 * scale) {
            // Exact fit without row i: no measurable influence when the row fits too.
            if (std::abs(e(i)) > 1e-12 * scale)
                throw NumericError(kModule, "leave-one-out residual variance is zero");
            out.dffits(i) = 0.0;
            out.dfbetas.col(i).setZero();
            continue;
        }
        out.dffits(i) = e(i) * std::sqrt(h) / (s_i * (1.0 - h));
        out.dfbetas.col(i) = shift.cwiseQuotient(sd_coef) / s_i;
        out.influential_rows[static_cast<std::size_t>(i)] = std::abs(out.dffits(i)) > out.threshold_dffits;
    }
    for (Eigen::Index g = 0; g < k; ++g)
        for (Eigen::Index i = 0; i < N; ++i)
            if (std::abs(out.dfbetas(g, i)) > out.threshold_dfbetas) ++out.xi[static_cast<std::size_t>(g)];
    return out;
}

InfluenceReport influence_diagnostics(const DemeanedPanel& panel, std::vector<int> columns) {
    panel.validate();
    if (columns.empty())
        for (int j = 0; j < panel.covariates(); ++j) columns.push_back(j);
    return influence_diagnostics(panel.y, treatment_design(panel, columns), design_names(panel, columns));
}

}  // namespace stabds::inference
