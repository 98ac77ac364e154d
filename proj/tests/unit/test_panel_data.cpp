#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "stabds/errors.hpp"
#include "stabds/panel_data.hpp"

using namespace stabds;

namespace {

// Three states, three periods, two pre-sample graduate years.
EnrollmentComponents three_states() {
    EnrollmentComponents c;
    c.n = 3;
    c.T = 3;
    c.hg_lead = 2;
    c.hg.resize(3, 5);
    c.hg << 1000, 1010, 1020, 1030, 1040,
            500, 505, 510, 515, 520,
            2000, 1990, 1980, 1970, 1960;
    c.ne_int.resize(3, 3);
    c.ne_int << 40, 42, 44,
                10, 11, 12,
                90, 85, 80;
    c.no.resize(3, 3);
    c.no << 800, 810, 820,
            400, 410, 420,
            1500, 1490, 1480;
    for (int t = 0; t < 3; ++t) {
        Eigen::MatrixXd f(3, 3);
        // f(j, i): graduates of j enrolling in i
        f << 600 + t, 120 + t, 60,
             80, 250 + 2 * t, 50 + t,
             150, 90, 1100 - 5 * t;
        c.ne_from.push_back(f);
        std::array<Eigen::MatrixXd, 3> lag;
        lag[0] = 0.7 * f;
        lag[1] = 0.2 * f;
        lag[2] = 0.05 * f;
        c.ne_lag.push_back(lag);
    }
    for (const char* u : {"A", "B", "C"}) c.unit_labels.push_back(u);
    for (const char* t : {"2010", "2011", "2012"}) c.time_labels.push_back(t);
    return c;
}

// Spreadsheet-style EHG: own graduates, theta times all inflows minus own,
// (1 - theta) times all other graduates, plus international.
double ehg_sheet(const EnrollmentComponents& c, int i, int t, double theta) {
    double inflow_all = 0.0, hg_all = 0.0;
    for (int j = 0; j < c.n; ++j) {
        inflow_all += c.ne_from[t](j, i);
        hg_all += c.hg(j, c.hg_lead + t);
    }
    const double own_hg = c.hg(i, c.hg_lead + t);
    return own_hg + theta * (inflow_all - c.ne_from[t](i, i)) + (1 - theta) * (hg_all - own_hg) + c.ne_int(i, t);
}

double ne_sheet(const EnrollmentComponents& c, int i, int t) {
    double s = c.ne_int(i, t);
    for (int j = 0; j < c.n; ++j) s += c.ne_from[t](j, i);
    return s;
}

double ehg_star_sheet(const EnrollmentComponents& c, int i, int t) {
    auto share = [&](int j, int dest, int l) { return c.ne_lag[t][l](j, dest) / c.no(j, t); };
    auto hg = [&](int j, int tt) { return c.hg(j, c.hg_lead + tt); };
    double total = hg(i, t) + share(i, i, 1) * hg(i, t - 1) + share(i, i, 2) * hg(i, t - 2) + c.ne_int(i, t);
    for (int j = 0; j < c.n; ++j) {
        if (j == i) continue;
        const double ahg = share(j, i, 0) * hg(j, t) + share(j, i, 1) * hg(j, t - 1) + share(j, i, 2) * hg(j, t - 2);
        total += ahg > c.ne_from[t](j, i) ? ahg : c.ne_from[t](j, i);
    }
    return total;
}

}  // namespace

TEST_CASE("within transform removes unit means") {
    std::mt19937_64 rng(11);
    auto panel = testutil::random_panel(4, 3, 2, rng);

    SUBCASE("y = (1,2,3) becomes (-1,0,1)") {
        panel.y.segment(0, 3) << 1, 2, 3;
        const auto dm = within_transform(panel);
        CHECK(dm.y(0) == doctest::Approx(-1.0));
        CHECK(dm.y(1) == doctest::Approx(0.0));
        CHECK(dm.y(2) == doctest::Approx(1.0));
    }
    SUBCASE("constant series vanish") {
        for (int i = 0; i < 4; ++i) panel.X.block(i * 3, 0, 3, 1).setConstant(i * 7.5 - 2);
        const auto dm = within_transform(panel);
        CHECK(dm.X.col(0).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("zero sums within units") {
        const auto dm = within_transform(panel);
        for (int i = 0; i < 4; ++i) {
            CHECK(std::abs(dm.y.segment(i * 3, 3).sum()) < 1e-12);
            CHECK(std::abs(dm.d.segment(i * 3, 3).sum()) < 1e-12);
            CHECK(dm.X.middleRows(i * 3, 3).colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("reconstruction and idempotence") {
        const auto dm = within_transform(panel);
        const auto back = dm.reconstruct();
        CHECK((back.y - panel.y).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((back.X - panel.X).cwiseAbs().maxCoeff() < 1e-12);
        const auto twice = within_transform(dm);
        CHECK((twice.y - dm.y).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((twice.X - dm.X).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("errors") {
        auto bad = panel;
        bad.y.conservativeResize(bad.y.size() - 1);
        CHECK_THROWS_AS(within_transform(bad), SchemaError);
        std::mt19937_64 r2(3);
        auto single = testutil::random_panel(5, 1, 2, r2);
        CHECK_THROWS_AS(within_transform(single), NumericError);
    }
}

TEST_CASE("response construction matches a spreadsheet recomputation") {
    const auto c = three_states();
    for (double theta : {0.0, 0.3, 0.98, 0.9927, 1.0}) {
        const auto y = build_response(c, theta);
        for (int i = 0; i < 3; ++i)
            for (int t = 0; t < 3; ++t)
                CHECK(y(i * 3 + t) == doctest::Approx(ne_sheet(c, i, t) / ehg_sheet(c, i, t, theta)).epsilon(1e-13));
    }
    CHECK_THROWS_AS(build_response(c, 1.2), ConfigError);
    CHECK_THROWS_AS(build_response(c, -0.1), ConfigError);
}

TEST_CASE("response extremes") {
    auto c = three_states();
    SUBCASE("theta = 1 with no inflows keeps own graduates and international") {
        for (int t = 0; t < 3; ++t)
            for (int j = 1; j < 3; ++j) c.ne_from[t](j, 0) = 0.0;
        c.ne_lag.clear();
        const auto ehg = eligible_graduates(c, 1.0);
        for (int t = 0; t < 3; ++t) CHECK(ehg(t) == doctest::Approx(c.HG(0, t) + c.ne_int(0, t)));
    }
    SUBCASE("theta = 0 adds every other state's graduates") {
        const auto ehg = eligible_graduates(c, 0.0);
        for (int t = 0; t < 3; ++t)
            CHECK(ehg(t) == doctest::Approx(c.HG(0, t) + c.HG(1, t) + c.HG(2, t) + c.ne_int(0, t)));
    }
    SUBCASE("response nondecreasing in theta when graduates exceed inflows") {
        Eigen::VectorXd prev = build_response(c, 0.0);
        for (double theta : theta_grid(0.1, 1.0, 10)) {
            const auto y = build_response(c, theta);
            CHECK(((y - prev).array() >= -1e-15).all());
            prev = y;
        }
    }
    SUBCASE("non-positive eligible graduates") {
        c.hg.setZero();
        c.ne_int.setZero();
        for (auto& f : c.ne_from) f.setZero();
        c.ne_lag.clear();
        CHECK_THROWS_AS(build_response(c, 1.0), NumericError);
    }
}

TEST_CASE("refined response") {
    auto c = three_states();
    SUBCASE("matches independent recomputation") {
        const auto ehg = eligible_graduates_extra(c);
        const auto y = build_response_extra(c);
        for (int i = 0; i < 3; ++i)
            for (int t = 0; t < 3; ++t) {
                CHECK(ehg(i * 3 + t) == doctest::Approx(ehg_star_sheet(c, i, t)).epsilon(1e-13));
                CHECK(y(i * 3 + t) == doctest::Approx(ne_sheet(c, i, t) / ehg_star_sheet(c, i, t)).epsilon(1e-13));
            }
    }
    SUBCASE("single current cohort with full share collapses to max(HG, NE_from)") {
        for (int t = 0; t < 3; ++t) {
            c.ne_lag[t][0] = c.ne_from[t];
            c.ne_lag[t][1].setZero();
            c.ne_lag[t][2].setZero();
            for (int j = 0; j < 3; ++j) c.no(j, t) = c.ne_from[t](j, 0);
        }
        const auto ehg = eligible_graduates_extra(c);
        // For destination 0 the share of j is 1, so AHG* = max(HG_j, NE_from(j, 0)).
        for (int t = 0; t < 3; ++t) {
            double expect = c.HG(0, t) + c.ne_int(0, t);
            for (int j = 1; j < 3; ++j) expect += std::max(c.HG(j, t), c.ne_from[t](j, 0));
            CHECK(ehg(t) == doctest::Approx(expect));
        }
    }
    SUBCASE("clamp binds when lagged cohorts fall short") {
        for (int t = 0; t < 3; ++t) {
            for (auto& l : c.ne_lag[t]) l *= 0.01;
        }
        const auto ehg = eligible_graduates_extra(c);
        for (int t = 0; t < 3; ++t) {
            double expect = c.ne_int(0, t) + c.HG(0, t);
            for (int l = 1; l <= 2; ++l) expect += c.ne_lag[t][l](0, 0) / c.no(0, t) * c.HG(0, t - l);
            for (int j = 1; j < 3; ++j) expect += c.ne_from[t](j, 0);
            CHECK(ehg(t) == doctest::Approx(expect));
        }
    }
    SUBCASE("missing history at the edge is an error") {
        c.hg_lead = 1;
        c.hg = c.hg.rightCols(4).eval();
        CHECK_THROWS_AS(eligible_graduates_extra(c), NumericError);
    }
    SUBCASE("zero NO with positive cohort flows") {
        c.no(1, 2) = 0.0;
        CHECK_THROWS_AS(eligible_graduates_extra(c), NumericError);
    }
    SUBCASE("lagged parts above the flow are rejected") {
        c.ne_lag[1][0](2, 0) = c.ne_from[1](2, 0) * 2;
        CHECK_THROWS_AS(eligible_graduates_extra(c), SchemaError);
    }
}

TEST_CASE("theta star") {
    SUBCASE("exact match at 0.99") {
        // Two symmetric states whose cohort shares make EHG* equal EHG(0.99).
        EnrollmentComponents c;
        c.n = 2;
        c.T = 1;
        c.hg_lead = 2;
        c.hg = Eigen::MatrixXd::Constant(2, 3, 1000.0);
        c.ne_int = Eigen::MatrixXd::Constant(2, 1, 25.0);
        c.no = Eigen::MatrixXd::Constant(2, 1, 100000.0 / 109.0);
        Eigen::MatrixXd f(2, 2);
        f << 300, 100, 100, 300;
        c.ne_from = {f};
        std::array<Eigen::MatrixXd, 3> lag{f, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)};
        lag[0].diagonal().setZero();
        c.ne_lag = {lag};
        const auto star = theta_star(c, {0.98, 0.985, 0.99, 0.995, 1.0}, DeviationCriterion::msd);
        CHECK(star.theta == 0.99);
        CHECK(star.deviation < 1e-20);
    }
    SUBCASE("argmin over the grid by brute force") {
        const auto c = three_states();
        const auto grid = theta_grid();
        CHECK(grid.size() == 201);
        CHECK(grid.front() == 0.98);
        CHECK(grid.back() == 1.0);
        for (auto crit : {DeviationCriterion::msd, DeviationCriterion::mad}) {
            const auto star = theta_star(c, grid, crit);
            double best = INFINITY, arg = 0;
            for (double th : grid) {
                double dev = 0;
                for (int i = 0; i < 3; ++i)
                    for (int t = 0; t < 3; ++t) {
                        const double diff = ehg_sheet(c, i, t, th) - ehg_star_sheet(c, i, t);
                        dev += crit == DeviationCriterion::msd ? diff * diff : std::abs(diff);
                    }
                dev /= 9;
                if (dev <= best * (1 + 1e-12)) {
                    if (dev < best * (1 - 1e-12) || th > arg) arg = th;
                    best = std::min(best, dev);
                }
            }
            CHECK(star.theta == doctest::Approx(arg));
            CHECK(star.deviation == doctest::Approx(best).epsilon(1e-9));
        }
        CHECK_THROWS_AS(theta_star(c, {}, DeviationCriterion::msd), ConfigError);
    }
}

TEST_CASE("theta grid parsing") {
    const auto g = parse_theta_grid("0.98:1:0.002");
    CHECK(g.size() == 11);
    CHECK(g.front() == 0.98);
    CHECK(g.back() == 1.0);
    CHECK_THROWS_AS(parse_theta_grid("0.98-1"), ConfigError);
    CHECK_THROWS_AS(parse_theta_grid("0.9:1.1:0.1"), ConfigError);
}

TEST_CASE("response grid") {
    const auto c = three_states();
    const std::vector<double> thetas{0.98, 0.99, 1.0};
    const auto grid = build_response_grid(c, thetas);
    REQUIRE(grid.y_grid.cols() == 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(grid.y_grid.col(k).isApprox(build_response(c, thetas[k])));
        CHECK(grid.mean_by_theta[k] == doctest::Approx(grid.y_grid.col(k).mean()));
        CHECK(grid.admissible[k] == (grid.mean_by_theta[k] >= 0.4));
        CHECK(grid.y_grid.col(k).minCoeff() > 0);
    }
}

TEST_CASE("spatial controls") {
    auto c = three_states();
    BoolMatrix adj(3, 3);
    adj << false, true, false,
           true, false, true,
           false, true, false;
    SUBCASE("hand enumeration with one fee state") {
        BoolMatrix fees = BoolMatrix::Constant(3, 3, false);
        fees.row(1).setConstant(true);  // B charges fees, neighbour of A and C
        const auto sc = compute_spatial_controls(c, fees, adj);
        for (int t = 0; t < 3; ++t) {
            const auto& f = c.ne_from[t];
            const double ne_a = ne_sheet(c, 0, t);
            // A: B is a fee neighbour, C pays none
            CHECK(sc.values(t, 0) == doctest::Approx((f(1, 0) - f(0, 1)) / ne_a));
            CHECK(sc.values(t, 1) == doctest::Approx(0.0));
            CHECK(sc.values(t, 2) == doctest::Approx((f(2, 0) - f(0, 2)) / ne_a));
            CHECK(sc.values(t, 3) == doctest::Approx(c.ne_int(0, t) / ne_a));
            // B: both others are fee-free
            const double ne_b = ne_sheet(c, 1, t);
            CHECK(sc.values(3 + t, 0) == doctest::Approx(0.0));
            CHECK(sc.values(3 + t, 2) == doctest::Approx((f(0, 1) - f(1, 0) + f(2, 1) - f(1, 2)) / ne_b));
        }
    }
    SUBCASE("non-adjacent fee state lands in rest") {
        BoolMatrix fees = BoolMatrix::Constant(3, 3, false);
        fees.row(2).setConstant(true);
        const auto sc = compute_spatial_controls(c, fees, adj);
        const auto& f = c.ne_from[0];
        CHECK(sc.values(0, 1) == doctest::Approx((f(2, 0) - f(0, 2)) / ne_sheet(c, 0, 0)));
        CHECK(sc.values(0, 0) == doctest::Approx(0.0));
    }
    SUBCASE("no fees leaves the fee columns empty") {
        const auto sc = compute_spatial_controls(c, BoolMatrix::Constant(3, 3, false), adj);
        CHECK(sc.values.col(0).cwiseAbs().maxCoeff() == 0.0);
        CHECK(sc.values.col(1).cwiseAbs().maxCoeff() == 0.0);
        CHECK(sc.values.col(3).minCoeff() >= 0.0);
        CHECK(sc.values.col(3).maxCoeff() <= 1.0);
    }
    SUBCASE("symmetric flows cancel") {
        for (auto& f : c.ne_from) f = (0.5 * (f + f.transpose())).eval();
        c.ne_lag.clear();
        BoolMatrix fees = BoolMatrix::Constant(3, 3, false);
        fees.row(0).setConstant(true);
        const auto sc = compute_spatial_controls(c, fees, adj);
        CHECK(sc.values.leftCols(3).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("invalid adjacency") {
        BoolMatrix asym = adj;
        asym(0, 1) = false;
        CHECK_THROWS_AS(compute_spatial_controls(c, BoolMatrix::Constant(3, 3, false), asym), SchemaError);
        BoolMatrix loop = adj;
        loop(2, 2) = true;
        CHECK_THROWS_AS(compute_spatial_controls(c, BoolMatrix::Constant(3, 3, false), loop), SchemaError);
    }
}
