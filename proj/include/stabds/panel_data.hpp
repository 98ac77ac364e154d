#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stabds {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Balanced n x T panel. Rows are stacked unit-major, time-minor: the
/// observation (i, t) lives in row i * T + t of y, d and X.
struct PanelDataset {
    int n = 0;
    int T = 0;
    Eigen::VectorXd y;
    Eigen::VectorXd d;
    Eigen::MatrixXd X;
    std::vector<std::string> unit_labels;
    std::vector<std::string> time_labels;
    std::vector<std::string> column_names;

    Eigen::Index rows() const { return static_cast<Eigen::Index>(n) * T; }
    Eigen::Index row(int i, int t) const { return static_cast<Eigen::Index>(i) * T + t; }
    int covariates() const { return static_cast<int>(X.cols()); }

    /// Unit index of every stacked row.
    std::vector<int> unit_of_rows() const;

    /// Throws SchemaError when the shapes do not describe a balanced panel
    /// or any value is non-finite.
    void validate() const;

    /// Index of a covariate by name; throws SchemaError if absent.
    int column_index(const std::string& name) const;
};

/// Panel with every series replaced by its deviation from the unit mean.
/// The subtracted means are kept so the original can be rebuilt.
struct DemeanedPanel : PanelDataset {
    Eigen::VectorXd mean_y;  // n
    Eigen::VectorXd mean_d;  // n
    Eigen::MatrixXd mean_X;  // n x p

    PanelDataset reconstruct() const;
};

/// Within (fixed-effects) transformation.
DemeanedPanel within_transform(const PanelDataset& panel);

/// Raw enrollment counts. Flows are indexed (origin j, destination i) per
/// period; counts are non-negative reals.
struct EnrollmentComponents {
    int n = 0;
    int T = 0;
    /// Pre-sample periods of graduate counts available before t = 0 (0..2).
    int hg_lead = 0;
    /// High school graduates, n x (hg_lead + T); column hg_lead + t is period t.
    Eigen::MatrixXd hg;
    /// International new enrollments, n x T.
    Eigen::MatrixXd ne_int;
    /// Enrollments anywhere by graduates of j, n x T. Empty when unavailable.
    Eigen::MatrixXd no;
    /// ne_from[t](j, i): enrollments in i with a diploma from j.
    std::vector<Eigen::MatrixXd> ne_from;
    /// ne_lag[t][l](j, i): the part of ne_from[t](j, i) whose diploma dates
    /// from period t - l. Empty when cohort data is unavailable.
    std::vector<std::array<Eigen::MatrixXd, 3>> ne_lag;
    std::vector<std::string> unit_labels;
    std::vector<std::string> time_labels;

    bool has_lags() const { return !ne_lag.empty(); }
    bool has_hg(int j, int t) const { return t >= -hg_lead && t < T && hg.rows() > j; }
    double HG(int j, int t) const { return hg(j, hg_lead + t); }
    double NE_from(int j, int i, int t) const { return ne_from[t](j, i); }
    /// Total new enrollments in i: flows from every German state plus international.
    double NE(int i, int t) const;

    void validate() const;
};

/// Eligible graduates EHG(theta) for every (i, t), stacked unit-major.
Eigen::VectorXd eligible_graduates(const EnrollmentComponents& c, double theta);

/// Refined eligible graduates EHG* built from cohort-lagged enrollments.
Eigen::VectorXd eligible_graduates_extra(const EnrollmentComponents& c);

/// y = NE / EHG(theta).
Eigen::VectorXd build_response(const EnrollmentComponents& c, double theta);

/// y_extra = NE / EHG*.
Eigen::VectorXd build_response_extra(const EnrollmentComponents& c);

enum class DeviationCriterion { msd, mad };

struct ThetaStar {
    double theta = 0.0;
    double deviation = 0.0;
    std::vector<double> grid;
    std::vector<double> deviations;
};

/// Grid point minimising the mean squared (or absolute) deviation between
/// EHG(theta) and EHG*. Ties resolve to the larger theta.
ThetaStar theta_star(const EnrollmentComponents& c, const std::vector<double>& grid,
                     DeviationCriterion criterion);

/// `points` equally spaced values on [lo, hi]; default 201 points on [0.98, 1].
std::vector<double> theta_grid(double lo = 0.98, double hi = 1.0, int points = 201);

/// Parses "lo:hi:step" into an inclusive grid.
std::vector<double> parse_theta_grid(const std::string& spec);

inline constexpr double kAdmissibleMeanResponse = 0.4;

struct ResponseGrid {
    std::vector<double> theta_values;
    Eigen::MatrixXd y_grid;  // nT x K
    std::vector<double> mean_by_theta;
    std::vector<bool> admissible;
};

ResponseGrid build_response_grid(const EnrollmentComponents& c, const std::vector<double>& thetas);

struct SpatialControls {
    static constexpr std::array<const char*, 4> names = {
        "Migration.neighbor.fees", "Migration.rest.fees", "Migration.no.fees",
        "Migration.international"};
    Eigen::MatrixXd values;  // nT x 4, stacked unit-major
};

/// Net migration shares by state group plus the international share.
/// `fees(j, t)` marks states charging fees; `adjacency` must be symmetric
/// with a false diagonal.
SpatialControls compute_spatial_controls(const EnrollmentComponents& c, const BoolMatrix& fees,
                                         const BoolMatrix& adjacency);

}  // namespace stabds
