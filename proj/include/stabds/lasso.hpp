#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabds/rng.hpp"

namespace stabds::lasso {

/// l1-penalised least squares without intercept:
///   minimise (1 / 2N) ||r - Z b||^2 + lambda * sum_j |b_j|
/// With `standardize`, columns are scaled to unit standard deviation before
/// penalisation and coefficients are mapped back afterwards.
struct LassoProblem {
    Eigen::MatrixXd Z;
    Eigen::VectorXd r;
    double lambda = 0.0;
    bool standardize = true;
};

struct SolverOptions {
    /// Stop when the largest coefficient change over a full sweep is below tol.
    double tol = 1e-7;
    int max_iter = 100000;
    bool record_trace = false;
    /// Once a full sweep leaves the active set and signs unchanged, jump to
    /// the minimiser on that face when it keeps the signs. Sweeps still
    /// decide convergence.
    bool face_solve = true;
};

struct LassoFit {
    Eigen::VectorXd coefficients;  // original scale
    double lambda = 0.0;
    std::vector<int> active_set;
    double objective = 0.0;  // evaluated on the penalised (working) scale
    int iterations = 0;
    bool converged = false;
    std::vector<int> skipped_columns;  // constant columns, forced to zero
    std::vector<double> objective_trace;
};

LassoFit fit(const LassoProblem& problem, const SolverOptions& options = {});

/// Smallest penalty with an all-zero solution: max_j |Z_j' r| / N on the
/// working scale. Throws NumericError for a degenerate (all-zero) target.
double lambda_max(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r, bool standardize);

/// Log-spaced decreasing path from lambda_max down to ratio * lambda_max.
std::vector<double> lambda_path(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r, bool standardize,
                                int n_lambda, double ratio);

/// glmnet's default ratio: 1e-4 when N > q, otherwise 1e-2.
double default_path_ratio(Eigen::Index rows, Eigen::Index cols);

enum class CvRule { min, one_se };

std::string cv_rule_name(CvRule rule);
/// "min" or "one_se"; ConfigError otherwise.
CvRule parse_cv_rule(const std::string& name);

struct CvConfig {
    int folds = 10;
    int n_lambda = 100;
    double ratio = 0.0;  // <= 0 selects default_path_ratio
    CvRule rule = CvRule::min;
    bool standardize = true;
    SolverOptions solver{};
};

struct CvResult {
    std::vector<double> lambdas;
    std::vector<double> cv_error;  // mean out-of-fold squared error per lambda
    std::vector<double> cv_se;
    int chosen_index = 0;
    double lambda = 0.0;
    LassoFit fit;  // full-data fit at the chosen lambda
    std::vector<int> fold_of_row;
};

/// K-fold cross-validation over the default path. Rows sharing a group id
/// (the panel unit) always fall in the same fold. Ties in the CV curve
/// resolve to the larger penalty.
CvResult cv_select_lambda(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r, std::span<const int> groups,
                          const CvConfig& config, Engine& rng);

/// Same, with an explicit fold assignment per row (values 0..K-1).
CvResult cv_select_lambda_with_folds(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r,
                                     std::span<const int> fold_of_row, int folds, const CvConfig& config);

struct KktReport {
    double max_violation = 0.0;
    bool satisfied = false;
};

/// Stationarity check on the working scale: |g_j| = lambda with matching
/// sign for active j, |g_j| <= lambda otherwise, where g is the gradient of
/// the negative smooth part.
KktReport check_kkt(const LassoProblem& problem, const LassoFit& fit, double tol);

/// Objective trace and fit summary as JSON text.
std::string trace_json(const LassoFit& fit);

}  // namespace stabds::lasso
