#include "stabds/panel_data.hpp"

#include <cmath>
#include <sstream>

#include "stabds/errors.hpp"

namespace stabds {

namespace {

constexpr const char* kModule = "panel_data";

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

}  // namespace

std::vector<int> PanelDataset::unit_of_rows() const {
    std::vector<int> units(static_cast<std::size_t>(rows()));
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < T; ++t) units[static_cast<std::size_t>(row(i, t))] = i;
    return units;
}

void PanelDataset::validate() const {
    if (n < 1 || T < 1) throw SchemaError(kModule, "panel needs at least one unit and one period");
    const auto N = rows();
    if (y.size() != N || d.size() != N || X.rows() != N) {
        std::ostringstream msg;
        msg << "unbalanced panel: expected " << N << " rows (n=" << n << ", T=" << T << "), got y="
            << y.size() << ", d=" << d.size() << ", X=" << X.rows();
        throw SchemaError(kModule, msg.str());
    }
    if (static_cast<Eigen::Index>(column_names.size()) != X.cols())
        throw SchemaError(kModule, "column_names does not match the covariate count");
    if (!all_finite(y) || !all_finite(d) || !all_finite(X))
        throw SchemaError(kModule, "panel contains non-finite values");
}

int PanelDataset::column_index(const std::string& name) const {
    for (std::size_t j = 0; j < column_names.size(); ++j)
        if (column_names[j] == name) return static_cast<int>(j);
    throw SchemaError(kModule, "no covariate named '" + name + "'");
}

PanelDataset DemeanedPanel::reconstruct() const {
    PanelDataset out = static_cast<const PanelDataset&>(*this);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < T; ++t) {
            const auto r = row(i, t);
            out.y(r) += mean_y(i);
            out.d(r) += mean_d(i);
            out.X.row(r) += mean_X.row(i);
        }
    }
    return out;
}

DemeanedPanel within_transform(const PanelDataset& panel) {
    panel.validate();
    if (panel.T == 1)
        throw NumericError(kModule, "T = 1: demeaning removes all variation");

    DemeanedPanel out;
    static_cast<PanelDataset&>(out) = panel;
    const int p = panel.covariates();
    out.mean_y.setZero(panel.n);
    out.mean_d.setZero(panel.n);
    out.mean_X.setZero(panel.n, p);

    for (int i = 0; i < panel.n; ++i) {
        const auto first = panel.row(i, 0);
        out.mean_y(i) = panel.y.segment(first, panel.T).mean();
        out.mean_d(i) = panel.d.segment(first, panel.T).mean();
        out.mean_X.row(i) = panel.X.middleRows(first, panel.T).colwise().mean();
        out.y.segment(first, panel.T).array() -= out.mean_y(i);
        out.d.segment(first, panel.T).array() -= out.mean_d(i);
        out.X.middleRows(first, panel.T).rowwise() -= out.mean_X.row(i);
    }
    return out;
}

double EnrollmentComponents::NE(int i, int t) const {
    return ne_from[t].col(i).sum() + ne_int(i, t);
}

void EnrollmentComponents::validate() const {
    if (n < 1 || T < 1) throw SchemaError(kModule, "components need at least one state and period");
    if (hg_lead < 0 || hg_lead > 2) throw SchemaError(kModule, "hg_lead must be in 0..2");
    if (hg.rows() != n || hg.cols() != hg_lead + T)
        throw SchemaError(kModule, "HG must be n x (hg_lead + T)");
    if (ne_int.rows() != n || ne_int.cols() != T) throw SchemaError(kModule, "NE_int must be n x T");
    if (no.size() != 0 && (no.rows() != n || no.cols() != T))
        throw SchemaError(kModule, "NO must be n x T");
    if (static_cast<int>(ne_from.size()) != T) throw SchemaError(kModule, "NE_from needs one matrix per period");
    if (!ne_lag.empty() && static_cast<int>(ne_lag.size()) != T)
        throw SchemaError(kModule, "NE_lag needs one entry per period");

    auto check_nonneg = [](const Eigen::MatrixXd& m, const char* what) {
        if (!m.allFinite() || (m.size() > 0 && m.minCoeff() < 0.0))
            throw SchemaError(kModule, std::string(what) + " must be finite and non-negative");
    };
    check_nonneg(hg, "HG");
    check_nonneg(ne_int, "NE_int");
    check_nonneg(no, "NO");
    for (int t = 0; t < T; ++t) {
        if (ne_from[t].rows() != n || ne_from[t].cols() != n)
            throw SchemaError(kModule, "NE_from matrices must be n x n");
        check_nonneg(ne_from[t], "NE_from");
        if (ne_lag.empty()) continue;
        Eigen::MatrixXd total = Eigen::MatrixXd::Zero(n, n);
        for (const auto& lag : ne_lag[t]) {
            if (lag.rows() != n || lag.cols() != n) throw SchemaError(kModule, "NE_lag matrices must be n x n");
            check_nonneg(lag, "NE_lag");
            total += lag;
        }
        // Cohorts older than two years are not itemised, so the lagged parts
        // may fall short of the total flow but never exceed it.
        const Eigen::MatrixXd excess = total - ne_from[t];
        const double tol = 1e-9 * std::max(1.0, ne_from[t].cwiseAbs().maxCoeff());
        if (excess.maxCoeff() > tol) {
            std::ostringstream msg;
            msg << "cohort-lagged enrollments exceed NE_from in period " << t;
            throw SchemaError(kModule, msg.str());
        }
    }
}

Eigen::VectorXd eligible_graduates(const EnrollmentComponents& c, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError(kModule, "theta must lie in [0, 1]");
    c.validate();
    Eigen::VectorXd ehg(static_cast<Eigen::Index>(c.n) * c.T);
    for (int i = 0; i < c.n; ++i) {
        for (int t = 0; t < c.T; ++t) {
            double movers = 0.0;
            for (int j = 0; j < c.n; ++j) {
                if (j == i) continue;
                movers += theta * c.NE_from(j, i, t) + (1.0 - theta) * c.HG(j, t);
            }
            ehg(static_cast<Eigen::Index>(i) * c.T + t) = c.HG(i, t) + movers + c.ne_int(i, t);
        }
    }
    return ehg;
}

namespace {

// c_{i,j,t,t-l} = NE_lag[j, t-l, i, t] / NO[j, t]
double cohort_share(const EnrollmentComponents& c, int j, int i, int t, int l) {
    const double lagged = c.ne_lag[t][l](j, i);
    const double total = c.no(j, t);
    if (total <= 0.0) {
        if (lagged != 0.0) {
            std::ostringstream msg;
            msg << "NO is zero for state " << j << " in period " << t
                << " while cohort-lagged enrollments are positive";
            throw NumericError(kModule, msg.str());
        }
        return 0.0;
    }
    return lagged / total;
}

double lagged_graduates(const EnrollmentComponents& c, int j, int t, int l) {
    if (!c.has_hg(j, t - l)) {
        std::ostringstream msg;
        msg << "graduate count for state " << j << " at lag " << l << " of period " << t
            << " lies before the available history";
        throw NumericError(kModule, msg.str());
    }
    return c.HG(j, t - l);
}

}  // namespace

Eigen::VectorXd eligible_graduates_extra(const EnrollmentComponents& c) {
    c.validate();
    if (!c.has_lags()) throw SchemaError(kModule, "cohort-lagged enrollments are required for EHG*");
    if (c.no.size() == 0) throw SchemaError(kModule, "NO is required for EHG*");

    Eigen::VectorXd ehg(static_cast<Eigen::Index>(c.n) * c.T);
    for (int i = 0; i < c.n; ++i) {
        for (int t = 0; t < c.T; ++t) {
            double own = c.HG(i, t);
            for (int l = 1; l <= 2; ++l) own += cohort_share(c, i, i, t, l) * lagged_graduates(c, i, t, l);

            double movers = 0.0;
            for (int j = 0; j < c.n; ++j) {
                if (j == i) continue;
                double affected = 0.0;
                for (int l = 0; l <= 2; ++l)
                    affected += cohort_share(c, j, i, t, l) * lagged_graduates(c, j, t, l);
                movers += std::max(affected, c.NE_from(j, i, t));
            }
            ehg(static_cast<Eigen::Index>(i) * c.T + t) = own + movers + c.ne_int(i, t);
        }
    }
    return ehg;
}

namespace {

Eigen::VectorXd ratio_response(const EnrollmentComponents& c, const Eigen::VectorXd& ehg) {
    Eigen::VectorXd y(ehg.size());
    for (int i = 0; i < c.n; ++i) {
        for (int t = 0; t < c.T; ++t) {
            const auto r = static_cast<Eigen::Index>(i) * c.T + t;
            if (!(ehg(r) > 0.0)) {
                std::ostringstream msg;
                msg << "eligible graduates not positive for unit " << i << ", period " << t;
                throw NumericError(kModule, msg.str());
            }
            y(r) = c.NE(i, t) / ehg(r);
        }
    }
    return y;
}

}  // namespace

Eigen::VectorXd build_response(const EnrollmentComponents& c, double theta) {
    return ratio_response(c, eligible_graduates(c, theta));
}

Eigen::VectorXd build_response_extra(const EnrollmentComponents& c) {
    return ratio_response(c, eligible_graduates_extra(c));
}

ThetaStar theta_star(const EnrollmentComponents& c, const std::vector<double>& grid,
                     DeviationCriterion criterion) {
    if (grid.empty()) throw ConfigError(kModule, "theta grid is empty");
    const Eigen::VectorXd target = eligible_graduates_extra(c);

    ThetaStar out;
    out.grid = grid;
    out.deviations.reserve(grid.size());
    bool first = true;
    for (double theta : grid) {
        const Eigen::ArrayXd diff = (eligible_graduates(c, theta) - target).array();
        const double dev = criterion == DeviationCriterion::msd ? diff.square().mean() : diff.abs().mean();
        out.deviations.push_back(dev);
        if (first || dev < out.deviation || (dev == out.deviation && theta > out.theta)) {
            out.theta = theta;
            out.deviation = dev;
            first = false;
        }
    }
    return out;
}

std::vector<double> theta_grid(double lo, double hi, int points) {
    if (points < 1 || !(lo <= hi)) throw ConfigError(kModule, "invalid theta grid");
    if (points == 1) return {lo};
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k) grid[k] = lo + (hi - lo) * k / (points - 1);
    grid.back() = hi;
    return grid;
}

std::vector<double> parse_theta_grid(const std::string& spec) {
    double lo = 0.0, hi = 0.0, step = 0.0;
    char c1 = 0, c2 = 0;
    std::istringstream in(spec);
    if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0.0) || hi < lo)
        throw ConfigError(kModule, "theta grid must look like lo:hi:step, got '" + spec + "'");
    const int points = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> grid;
    for (int k = 0; k < points; ++k) grid.push_back(std::min(hi, lo + k * step));
    if (hi - grid.back() > 1e-12) grid.push_back(hi);
    for (double th : grid)
        if (th < 0.0 || th > 1.0) throw ConfigError(kModule, "theta grid leaves [0, 1]");
    return grid;
}

ResponseGrid build_response_grid(const EnrollmentComponents& c, const std::vector<double>& thetas) {
    ResponseGrid out;
    out.theta_values = thetas;
    out.y_grid.resize(static_cast<Eigen::Index>(c.n) * c.T, static_cast<Eigen::Index>(thetas.size()));
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        out.y_grid.col(static_cast<Eigen::Index>(k)) = build_response(c, thetas[k]);
        const double mean = out.y_grid.col(static_cast<Eigen::Index>(k)).mean();
        out.mean_by_theta.push_back(mean);
        out.admissible.push_back(mean >= kAdmissibleMeanResponse);
    }
    return out;
}

SpatialControls compute_spatial_controls(const EnrollmentComponents& c, const BoolMatrix& fees,
                                         const BoolMatrix& adjacency) {
    c.validate();
    if (fees.rows() != c.n || fees.cols() != c.T) throw SchemaError(kModule, "fee indicator must be n x T");
    if (adjacency.rows() != c.n || adjacency.cols() != c.n)
        throw SchemaError(kModule, "adjacency must be n x n");
    for (int a = 0; a < c.n; ++a) {
        if (adjacency(a, a)) throw SchemaError(kModule, "adjacency diagonal must be false");
        for (int b = 0; b < a; ++b)
            if (adjacency(a, b) != adjacency(b, a)) throw SchemaError(kModule, "adjacency must be symmetric");
    }

    SpatialControls out;
    out.values.setZero(static_cast<Eigen::Index>(c.n) * c.T, 4);
    for (int i = 0; i < c.n; ++i) {
        for (int t = 0; t < c.T; ++t) {
            const double total = c.NE(i, t);
            if (!(total > 0.0)) {
                std::ostringstream msg;
                msg << "no new enrollments in unit " << i << ", period " << t;
                throw NumericError(kModule, msg.str());
            }
            double net[3] = {0.0, 0.0, 0.0};
            for (int j = 0; j < c.n; ++j) {
                if (j == i) continue;
                const int group = fees(j, t) ? (adjacency(i, j) ? 0 : 1) : 2;
                net[group] += c.NE_from(j, i, t) - c.NE_from(i, j, t);
            }
            const auto r = static_cast<Eigen::Index>(i) * c.T + t;
            for (int g = 0; g < 3; ++g) out.values(r, g) = net[g] / total;
            out.values(r, 3) = c.ne_int(i, t) / total;
        }
    }
    return out;
}

}  // namespace stabds
