#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stabds/panel_data.hpp"

namespace stabds::inference {

enum class SeKind { design, hc3 };

std::string se_kind_name(SeKind kind);
SeKind parse_se_kind(const std::string& name);

/// Post-selection estimate of the treatment effect.
struct CausalEstimate {
    double beta0 = 0.0;
    double se_design = 0.0;
    double se_hc3 = 0.0;
    int df = 0;
    double t_stat = 0.0;
    double p_value = 1.0;
    std::pair<double, double> ci{0.0, 0.0};
    double level = 0.95;
    SeKind se_in_use = SeKind::design;
    std::vector<int> selected;
    Eigen::VectorXd coefficients;  // controls, in the order of `selected`
    Eigen::VectorXd residuals;
};

/// Fixed-effects degrees of freedom n(T-1) - (|S| + 1).
int fixed_effects_df(int n, int T, std::size_t selected);

/// OLS of the demeaned response on the demeaned treatment and the columns
/// in S. Fills beta0, coefficients, residuals, selected and df only.
CausalEstimate post_ols(const DemeanedPanel& panel, std::span<const int> S);

/// Design-based standard error from the treatment residual V = D - U Lambda
/// and the variance G of V * residual around its projection on U.
double design_se(const Eigen::VectorXd& D, const Eigen::MatrixXd& U, const Eigen::VectorXd& residuals);
double design_se(const DemeanedPanel& panel, std::span<const int> S, const CausalEstimate& estimate);

/// HC3 sandwich standard error of coefficient `index` of the OLS fit of
/// some response on W with the given residuals.
double hc3_se(const Eigen::MatrixXd& W, const Eigen::VectorXd& residuals, Eigen::Index index);
double hc3_se(const DemeanedPanel& panel, std::span<const int> S, const CausalEstimate& estimate);

/// Classical homoskedastic OLS standard error, for comparison.
double classical_se(const Eigen::MatrixXd& W, const Eigen::VectorXd& residuals, Eigen::Index index, int df);

struct TTest {
    double t = 0.0;
    double p = 1.0;
    bool reject = false;
};

/// Two-sided test of beta0 = null_value with Student-t(df) reference.
TTest t_test(const CausalEstimate& estimate, double null_value, SeKind kind, double alpha = 0.05);

/// Two-sided p-value for a t statistic.
double two_sided_p(double t, int df);
double t_quantile(double prob, int df);

/// post_ols plus both standard errors, the test against zero with the
/// chosen SE kind and a confidence interval at `level`.
CausalEstimate estimate_effect(const DemeanedPanel& panel, std::span<const int> S, SeKind use = SeKind::design,
                               double level = 0.95);

struct InfluenceReport {
    Eigen::VectorXd dffits;       // N
    Eigen::MatrixXd dfbetas;      // p x N
    double threshold_dffits = 0;  // sqrt(p) / N
    double threshold_dfbetas = 0; // 2 / sqrt(N)
    std::vector<int> xi;          // per variable: count of |DFBETAS| above threshold
    std::vector<bool> influential_rows;
    std::vector<std::string> variables;
};

/// Leave-one-out DFFITS and DFBETAS from the leverage identities.
InfluenceReport influence_diagnostics(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                                      std::vector<std::string> variables);

/// Diagnostics for the demeaned regression of y on the treatment and the
/// given covariate columns (all covariates when `columns` is empty).
InfluenceReport influence_diagnostics(const DemeanedPanel& panel, std::vector<int> columns = {});

}  // namespace stabds::inference
