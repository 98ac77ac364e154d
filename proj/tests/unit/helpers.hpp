#pragma once

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "stabds/lasso.hpp"
#include "stabds/panel_data.hpp"

namespace testutil {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = z(rng);
    return m;
}

inline Eigen::VectorXd gaussian(Eigen::Index rows, std::mt19937_64& rng) {
    return gaussian(rows, 1, rng).col(0);
}

inline std::vector<std::string> names(int p, const char* prefix = "x") {
    std::vector<std::string> out;
    for (int j = 0; j < p; ++j) out.push_back(prefix + std::to_string(j + 1));
    return out;
}

inline stabds::PanelDataset random_panel(int n, int T, int p, std::mt19937_64& rng) {
    stabds::PanelDataset panel;
    panel.n = n;
    panel.T = T;
    panel.X = gaussian(static_cast<Eigen::Index>(n) * T, p, rng);
    panel.d = gaussian(panel.rows(), rng);
    panel.y = gaussian(panel.rows(), rng);
    for (int i = 0; i < n; ++i) panel.unit_labels.push_back("u" + std::to_string(i));
    for (int t = 0; t < T; ++t) panel.time_labels.push_back(std::to_string(2000 + t));
    panel.column_names = names(p);
    return panel;
}

// Least squares through the normal equations.
inline Eigen::VectorXd normal_equations(const Eigen::MatrixXd& W, const Eigen::VectorXd& y) {
    return (W.transpose() * W).ldlt().solve(W.transpose() * y);
}

inline Eigen::VectorXd population_sd(const Eigen::MatrixXd& Z) {
    const Eigen::RowVectorXd mean = Z.colwise().mean();
    return ((Z.rowwise() - mean).array().square().colwise().mean()).sqrt().transpose();
}

// Subgradient conditions recomputed from scratch on the working scale.
inline double kkt_violation(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r, const stabds::lasso::LassoFit& f,
                            bool standardize) {
    const Eigen::VectorXd s = standardize ? population_sd(Z) : Eigen::VectorXd::Ones(Z.cols());
    const double N = static_cast<double>(Z.rows());
    const Eigen::VectorXd resid = r - Z * f.coefficients;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        const double g = Z.col(j).dot(resid) / N / s(j);
        const double bj = f.coefficients(j) * s(j);
        const double v = bj != 0.0 ? std::abs(g - (bj > 0 ? f.lambda : -f.lambda)) : std::max(0.0, std::abs(g) - f.lambda);
        worst = std::max(worst, v);
    }
    return worst;
}

// Design-based SE by its five steps, with explicit inverses.
inline double design_se_literal(const Eigen::VectorXd& D, const Eigen::MatrixXd& U, const Eigen::VectorXd& e) {
    Eigen::VectorXd V = D;
    if (U.cols() > 0) V = D - U * (U.transpose() * U).inverse() * (U.transpose() * D);
    const Eigen::VectorXd Ve = V.cwiseProduct(e);
    Eigen::VectorXd beta_e = Eigen::VectorXd::Zero(U.cols());
    if (U.cols() > 0) beta_e = (U.transpose() * U).inverse() * (U.transpose() * Ve);
    const Eigen::VectorXd c = Ve - U * beta_e;
    const double G = c.dot(c);
    const double VtV_inv = 1.0 / V.dot(V);
    return std::sqrt(VtV_inv * G * VtV_inv);
}

struct LooInfluence {
    Eigen::VectorXd dffits;   // N
    Eigen::MatrixXd dfbetas;  // k x N
};

// DFFITS and DFBETAS from N explicit leave-one-out refits.
inline LooInfluence loo_influence(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const auto N = X.rows(), k = X.cols();
    const Eigen::VectorXd beta = normal_equations(X, y);
    const Eigen::MatrixXd A = (X.transpose() * X).inverse();
    LooInfluence out{Eigen::VectorXd(N), Eigen::MatrixXd(k, N)};
    for (Eigen::Index i = 0; i < N; ++i) {
        Eigen::MatrixXd Xi(N - 1, k);
        Eigen::VectorXd yi(N - 1);
        for (Eigen::Index r = 0, o = 0; r < N; ++r) {
            if (r == i) continue;
            Xi.row(o) = X.row(r);
            yi(o++) = y(r);
        }
        const Eigen::VectorXd bi = normal_equations(Xi, yi);
        const double si = std::sqrt((yi - Xi * bi).squaredNorm() / static_cast<double>(N - 1 - k));
        const double h = X.row(i) * A * X.row(i).transpose();
        out.dffits(i) = (X.row(i).dot(beta) - X.row(i).dot(bi)) / (si * std::sqrt(h));
        for (Eigen::Index g = 0; g < k; ++g) out.dfbetas(g, i) = (beta(g) - bi(g)) / (si * std::sqrt(A(g, g)));
    }
    return out;
}

}  // namespace testutil
