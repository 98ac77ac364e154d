// Writes the bundled 16 x 10 demonstration panel.
//
// Enrollment rates in percentage points with unit fixed effects, a fee
// indicator for seven states (planted effect -4.0), six controls that enter
// the response, and thirteen controls that do not. The thirteen are weakly
// tied to both the fee indicator and the response shock, each too weakly
// to be selected reliably; taken together they pull a regression on every
// control toward zero.

#include <CLI11.hpp>

#include <array>
#include <iostream>
#include <random>

#include "stabds/csv.hpp"
#include "stabds/errors.hpp"
#include "stabds/rng.hpp"

using namespace stabds;

namespace {

constexpr int kUnits = 16;
constexpr int kYears = 10;
constexpr int kFirstYear = 2003;
constexpr double kEffect = -4.0;
constexpr double kNoise = 1.5;
constexpr double kSpuriousTreatment = -0.35;
constexpr double kSpuriousShock = 0.2;

constexpr std::array<const char*, 6> kRelevant = {
    "Student.to.researcher.ratio", "Double.Cohort", "Migration.rest.fees",
    "Migration.no.fees", "Migration.international", "Unemployment.rate"};
constexpr std::array<double, 6> kEta = {-3.0, -2.8, 2.0, 1.5, -1.5, 1.0};

constexpr std::array<const char*, 13> kSpurious = {
    "GDP.growth", "Population.18to25", "Share.female.graduates", "Research.funding", "Rent.index",
    "Apprenticeships", "Tertiary.staff", "Public.debt", "Youth.unemployment", "Commuters.out",
    "Dorm.capacity", "Private.universities", "Abitur.grade.mean"};

// Last fee year of the seven fee states; fees start in 2007 everywhere.
constexpr std::array<int, 7> kFeeEnd = {2008, 2008, 2010, 2010, 2011, 2012, 2012};

PanelDataset generate(std::uint64_t seed) {
    Engine rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_int_distribution<int> cohort_year(2007, 2013);

    PanelDataset p;
    p.n = kUnits;
    p.T = kYears;
    const auto N = p.rows();
    const auto q = static_cast<Eigen::Index>(kRelevant.size() + kSpurious.size());
    p.y.resize(N);
    p.d = Eigen::VectorXd::Zero(N);
    p.X.resize(N, q);
    for (int i = 0; i < kUnits; ++i) p.unit_labels.push_back("S" + std::to_string(i + 1));
    for (int t = 0; t < kYears; ++t) p.time_labels.push_back(std::to_string(kFirstYear + t));
    for (const char* name : kRelevant) p.column_names.emplace_back(name);
    for (const char* name : kSpurious) p.column_names.emplace_back(name);

    for (int i = 0; i < static_cast<int>(kFeeEnd.size()); ++i)
        for (int t = 0; t < kYears; ++t) {
            const int year = kFirstYear + t;
            p.d(p.row(i, t)) = year >= 2007 && year <= kFeeEnd[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        }

    for (int i = 0; i < kUnits; ++i) {
        const double alpha = 45.0 + 5.0 * z(rng);
        const double ratio_level = z(rng);
        const int double_cohort = cohort_year(rng);
        for (int t = 0; t < kYears; ++t) {
            const auto r = p.row(i, t);
            const int year = kFirstYear + t;
            const double d = p.d(r);
            p.X(r, 0) = ratio_level + 0.5 * z(rng);
            p.X(r, 1) = year == double_cohort ? 1.0 : 0.0;
            p.X(r, 2) = 0.6 * d + 0.8 * z(rng);
            p.X(r, 3) = z(rng);
            p.X(r, 4) = z(rng);
            p.X(r, 5) = 0.1 * (year - 2007) + z(rng);
            const double shock = z(rng);
            double y = alpha + kEffect * d + kNoise * shock;
            for (std::size_t g = 0; g < kEta.size(); ++g) y += kEta[g] * p.X(r, static_cast<Eigen::Index>(g));
            p.y(r) = y;
            for (std::size_t k = 0; k < kSpurious.size(); ++k)
                p.X(r, static_cast<Eigen::Index>(kRelevant.size() + k)) =
                    kSpuriousTreatment * d + kSpuriousShock * shock + z(rng);
        }
    }
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Write the synthetic demonstration panel"};
    std::uint64_t seed = 1;
    std::string out = "synthetic_panel.csv";
    app.add_option("--seed", seed)->capture_default_str();
    app.add_option("--out", out)->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    try {
        csv::write_file(out, csv::panel_to_csv(generate(seed)));
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
