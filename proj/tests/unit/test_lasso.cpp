#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "stabds/errors.hpp"
#include "stabds/lasso.hpp"

using namespace stabds;
using namespace stabds::lasso;

namespace {

double soft(double z, double g) { return z > g ? z - g : (z < -g ? z + g : 0.0); }

}  // namespace

TEST_CASE("lambda = 0 reproduces OLS and KKT holds") {
    std::mt19937_64 rng(2024);
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::MatrixXd Z = testutil::gaussian(80, 6, rng);
        const Eigen::VectorXd r = Z * testutil::gaussian(6, rng) + 0.5 * testutil::gaussian(80, rng);
        for (bool standardize : {true, false}) {
            const auto f = fit({Z, r, 0.0, standardize});
            CHECK(f.converged);
            CHECK((f.coefficients - testutil::normal_equations(Z, r)).cwiseAbs().maxCoeff() < 1e-6);
            CHECK(testutil::kkt_violation(Z, r, f, standardize) < 1e-6);
        }
    }
}

TEST_CASE("KKT at every returned fit along a path") {
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::MatrixXd Z = testutil::gaussian(60, 25, rng);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(25);
        beta.head(4) << 3, -2, 1.5, 1;
        const Eigen::VectorXd r = Z * beta + testutil::gaussian(60, rng);
        for (double lam : lambda_path(Z, r, true, 20, 0.01)) {
            LassoProblem prob{Z, r, lam, true};
            const auto f = fit(prob);
            CHECK(f.converged);
            CHECK(testutil::kkt_violation(Z, r, f, true) < 1e-6);
            CHECK(check_kkt(prob, f, 1e-6).satisfied);
        }
    }
}

TEST_CASE("penalty above lambda_max gives the empty model") {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd Z = testutil::gaussian(40, 5, rng);
    const Eigen::VectorXd r = testutil::gaussian(40, rng);
    const double top = lambda_max(Z, r, true);
    const Eigen::VectorXd sd = testutil::population_sd(Z);
    double expect = 0;
    for (int j = 0; j < 5; ++j) expect = std::max(expect, std::abs(Z.col(j).dot(r)) / 40.0 / sd(j));
    CHECK(top == doctest::Approx(expect).epsilon(1e-12));
    for (double lam : {top, 1.5 * top}) {
        const auto f = fit({Z, r, lam, true});
        CHECK(f.active_set.empty());
        CHECK(f.coefficients.isZero(0.0));
    }
}

TEST_CASE("single column soft threshold") {
    std::mt19937_64 rng(9);
    Eigen::MatrixXd z = testutil::gaussian(50, 1, rng);
    z /= std::sqrt(z.squaredNorm() / 50.0);  // z'z / N = 1
    const Eigen::VectorXd r = 0.8 * z.col(0) + testutil::gaussian(50, rng);
    const double ols = z.col(0).dot(r) / 50.0;
    for (double lam : {0.0, 0.1, 0.5, std::abs(ols) * 0.99, std::abs(ols) * 1.01}) {
        const auto f = fit({z, r, lam, false});
        CHECK(f.coefficients(0) == doctest::Approx(soft(ols, lam)).epsilon(1e-12));
    }
}

TEST_CASE("standardisation round trip") {
    std::mt19937_64 rng(31);
    Eigen::MatrixXd Z = testutil::gaussian(70, 8, rng);
    for (int j = 0; j < 8; ++j) Z.col(j) *= 0.2 + j;
    const Eigen::VectorXd r = Z.col(1) - 0.3 * Z.col(5) + testutil::gaussian(70, rng);
    const Eigen::VectorXd sd = testutil::population_sd(Z);
    const Eigen::MatrixXd Zs = Z * sd.cwiseInverse().asDiagonal();
    SolverOptions tight;
    tight.tol = 1e-13;
    for (double frac : {0.05, 0.2, 0.6}) {
        const double lam = frac * lambda_max(Z, r, true);
        const auto a = fit({Z, r, lam, true}, tight);
        const auto b = fit({Zs, r, lam, false}, tight);
        CHECK((a.coefficients - b.coefficients.cwiseQuotient(sd)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("column permutation permutes the solution") {
    std::mt19937_64 rng(13);
    const Eigen::MatrixXd Z = testutil::gaussian(60, 10, rng);
    const Eigen::VectorXd r = Z.col(2) * 2 + Z.col(7) + testutil::gaussian(60, rng);
    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd Zp(60, 10);
    for (int k = 0; k < 10; ++k) Zp.col(k) = Z.col(perm[k]);
    SolverOptions tight;
    tight.tol = 1e-13;
    const double lam = 0.1 * lambda_max(Z, r, true);
    const auto a = fit({Z, r, lam, true}, tight);
    const auto b = fit({Zp, r, lam, true}, tight);
    for (int k = 0; k < 10; ++k) CHECK(std::abs(b.coefficients(k) - a.coefficients(perm[k])) < 1e-8);
}

TEST_CASE("objective never rises between sweeps") {
    std::mt19937_64 rng(101);
    const Eigen::MatrixXd Z = testutil::gaussian(50, 30, rng);
    const Eigen::VectorXd r = Z.leftCols(3).rowwise().sum() + testutil::gaussian(50, rng);
    SolverOptions opt;
    opt.record_trace = true;
    for (bool face : {true, false}) {
        opt.face_solve = face;
        const auto f = fit({Z, r, 0.02, true}, opt);
        REQUIRE(f.objective_trace.size() >= 2);
        for (std::size_t k = 1; k < f.objective_trace.size(); ++k)
            CHECK(f.objective_trace[k] <= f.objective_trace[k - 1] + 1e-12);
        CHECK(f.objective == doctest::Approx(f.objective_trace.back()).epsilon(1e-10));
    }
}

TEST_CASE("constant columns are skipped") {
    std::mt19937_64 rng(3);
    Eigen::MatrixXd Z = testutil::gaussian(30, 3, rng);
    Z.col(1).setConstant(2.0);
    const Eigen::VectorXd r = Z.col(0) + 0.1 * testutil::gaussian(30, rng);
    const auto f = fit({Z, r, 0.01, true});
    CHECK(f.skipped_columns == std::vector<int>{1});
    CHECK(f.coefficients(1) == 0.0);
}

TEST_CASE("non-convergence is reported, not thrown") {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd Z = testutil::gaussian(30, 20, rng);
    const Eigen::VectorXd r = testutil::gaussian(30, rng);
    SolverOptions opt;
    opt.max_iter = 1;
    opt.tol = 0.0;
    const auto f = fit({Z, r, 1e-4, true}, opt);
    CHECK_FALSE(f.converged);
}

TEST_CASE("lambda path") {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd Z = testutil::gaussian(40, 6, rng);
    const Eigen::VectorXd r = testutil::gaussian(40, rng);
    const double top = lambda_max(Z, r, true);
    const auto two = lambda_path(Z, r, true, 2, 0.01);
    REQUIRE(two.size() == 2);
    CHECK(two[0] == top);
    CHECK(two[1] == doctest::Approx(0.01 * top).epsilon(1e-14));
    const auto path = lambda_path(Z, r, true, 100, 1e-4);
    for (std::size_t k = 1; k < path.size(); ++k) {
        CHECK(path[k] < path[k - 1]);
        if (k > 1) CHECK(std::log(path[k] / path[k - 1]) == doctest::Approx(std::log(path[1] / path[0])).epsilon(1e-9));
    }
    CHECK_THROWS_AS(lambda_path(Z, Eigen::VectorXd::Zero(40), true, 10, 0.01), NumericError);
    CHECK_THROWS_AS(lambda_path(Z, r, true, 1, 0.01), ConfigError);
    CHECK(default_path_ratio(160, 30) == 1e-4);
    CHECK(default_path_ratio(20, 30) == 1e-2);
}

TEST_CASE("cross-validation") {
    const int n = 16, T = 10, N = n * T;
    std::vector<int> groups(N);
    for (int row = 0; row < N; ++row) groups[row] = row / T;

    SUBCASE("folds are unit blocks") {
        std::mt19937_64 rng(1);
        const Eigen::MatrixXd Z = testutil::gaussian(N, 5, rng);
        const Eigen::VectorXd r = Z.col(0) + testutil::gaussian(N, rng);
        Engine e(7);
        const auto cv = cv_select_lambda(Z, r, groups, {}, e);
        for (int row = 0; row < N; ++row) CHECK(cv.fold_of_row[row] == cv.fold_of_row[(row / T) * T]);
        CHECK(cv.lambdas.size() == 100);
        CHECK(cv.lambdas.back() == doctest::Approx(1e-4 * cv.lambdas.front()));
    }
    SUBCASE("pure noise gives a near-empty model") {
        // The one-SE rule keeps at most one noise column almost always. The
        // minimum rule over-selects: about a quarter of runs keep two or more.
        int small_1se = 0, small_min = 0;
        const int runs = 40;
        for (int s = 0; s < runs; ++s) {
            std::mt19937_64 rng(500 + s);
            const Eigen::MatrixXd Z = testutil::gaussian(N, 10, rng);
            const Eigen::VectorXd r = testutil::gaussian(N, rng);
            CvConfig cfg;
            Engine e(s);
            small_min += cv_select_lambda(Z, r, groups, cfg, e).fit.active_set.size() <= 1;
            cfg.rule = CvRule::one_se;
            Engine e2(s);
            small_1se += cv_select_lambda(Z, r, groups, cfg, e2).fit.active_set.size() <= 1;
        }
        CHECK(small_1se >= 0.9 * runs);
        CHECK(small_min >= 0.5 * runs);
    }
    SUBCASE("strong single predictor is kept") {
        for (int s = 0; s < 10; ++s) {
            std::mt19937_64 rng(900 + s);
            const Eigen::MatrixXd Z = testutil::gaussian(N, 10, rng);
            const Eigen::VectorXd r = 5 * Z.col(0) + 0.1 * testutil::gaussian(N, rng);
            Engine e(s);
            const auto cv = cv_select_lambda(Z, r, groups, {}, e);
            CHECK(std::find(cv.fit.active_set.begin(), cv.fit.active_set.end(), 0) != cv.fit.active_set.end());
            LassoProblem prob{Z, r, cv.lambda, true};
            CHECK(testutil::kkt_violation(Z, r, cv.fit, true) < 1e-6);
        }
    }
    SUBCASE("identical folds reproduce the in-sample curve") {
        std::mt19937_64 rng(42);
        const int K = 4, m = 30;
        const Eigen::MatrixXd D = testutil::gaussian(m, 5, rng);
        const Eigen::VectorXd rd = D.col(0) - D.col(3) + testutil::gaussian(m, rng);
        Eigen::MatrixXd Z(K * m, 5);
        Eigen::VectorXd r(K * m);
        std::vector<int> folds(K * m);
        for (int k = 0; k < K; ++k) {
            Z.middleRows(k * m, m) = D;
            r.segment(k * m, m) = rd;
            std::fill(folds.begin() + k * m, folds.begin() + (k + 1) * m, k);
        }
        CvConfig cfg;
        cfg.n_lambda = 15;
        cfg.solver.tol = 1e-13;
        const auto cv = cv_select_lambda_with_folds(Z, r, folds, K, cfg);
        SolverOptions tight;
        tight.tol = 1e-13;
        for (std::size_t l = 0; l < cv.lambdas.size(); ++l) {
            const auto f = fit({D, rd, cv.lambdas[l], true}, tight);
            const double in_sample = (rd - D * f.coefficients).squaredNorm() / m;
            CHECK(cv.cv_error[l] == doctest::Approx(in_sample).epsilon(1e-8));
            CHECK(cv.cv_se[l] < 1e-8);
        }
    }
    SUBCASE("one-se rule never picks a smaller penalty than min") {
        std::mt19937_64 rng(64);
        const Eigen::MatrixXd Z = testutil::gaussian(N, 20, rng);
        const Eigen::VectorXd r = Z.leftCols(3) * Eigen::Vector3d(2, 1, 0.5) + testutil::gaussian(N, rng);
        CvConfig a, b;
        b.rule = CvRule::one_se;
        Engine e1(3), e2(3);
        const auto cmin = cv_select_lambda(Z, r, groups, a, e1);
        const auto cse = cv_select_lambda(Z, r, groups, b, e2);
        CHECK(cse.lambda >= cmin.lambda);
        CHECK(cse.cv_error[cse.chosen_index] <= cmin.cv_error[cmin.chosen_index] + cmin.cv_se[cmin.chosen_index] + 1e-15);
        for (std::size_t l = 0; l < cmin.cv_error.size(); ++l) CHECK(cmin.cv_error[cmin.chosen_index] <= cmin.cv_error[l]);
    }
    SUBCASE("more folds than units") {
        std::mt19937_64 rng(2);
        const Eigen::MatrixXd Z = testutil::gaussian(N, 3, rng);
        const Eigen::VectorXd r = testutil::gaussian(N, rng);
        CvConfig cfg;
        cfg.folds = 17;
        Engine e(1);
        CHECK_THROWS_AS(cv_select_lambda(Z, r, groups, cfg, e), ConfigError);
    }
}

TEST_CASE("rule names") {
    CHECK(parse_cv_rule("min") == CvRule::min);
    CHECK(parse_cv_rule("one_se") == CvRule::one_se);
    CHECK(cv_rule_name(CvRule::one_se) == "one_se");
    CHECK_THROWS_AS(parse_cv_rule("1se"), ConfigError);
}
