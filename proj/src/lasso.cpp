#include "stabds/lasso.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "stabds/errors.hpp"

namespace stabds::lasso {

namespace {

constexpr const char* kModule = "lasso_solver";

// Sufficient statistics of a row subset: Z'Z, Z'r, column sums, r'r.
struct RawSums {
    Eigen::MatrixXd ZtZ;
    Eigen::VectorXd Ztr;
    Eigen::VectorXd colsum;
    double rtr = 0.0;
    double rows = 0.0;

    static RawSums of(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r) {
        RawSums s;
        s.ZtZ.noalias() = Z.transpose() * Z;
        s.Ztr.noalias() = Z.transpose() * r;
        s.colsum = Z.colwise().sum().transpose();
        s.rtr = r.squaredNorm();
        s.rows = static_cast<double>(Z.rows());
        return s;
    }

    RawSums minus(const RawSums& o) const {
        RawSums s;
        s.ZtZ = ZtZ - o.ZtZ;
        s.Ztr = Ztr - o.Ztr;
        s.colsum = colsum - o.colsum;
        s.rtr = rtr - o.rtr;
        s.rows = rows - o.rows;
        return s;
    }
};

// Penalised quadratic on the working scale:
//   rr/2 - c'b + b'Gb/2 + lambda |b|_1,  with G = Zs'Zs / N, c = Zs'r / N.
struct System {
    Eigen::MatrixXd G;
    Eigen::VectorXd c;
    Eigen::VectorXd scale;  // working column = raw column / scale
    std::vector<char> skip;
    double rr = 0.0;

    static System from(const RawSums& s, bool standardize) {
        const auto q = s.ZtZ.cols();
        System sys;
        sys.scale.setOnes(q);
        sys.skip.assign(static_cast<std::size_t>(q), 0);
        for (Eigen::Index j = 0; j < q; ++j) {
            const double ms = s.ZtZ(j, j) / s.rows;
            if (standardize) {
                const double mean = s.colsum(j) / s.rows;
                const double var = ms - mean * mean;
                if (!(var > 1e-12 * ms) || ms <= 0.0) {
                    sys.skip[j] = 1;
                } else {
                    sys.scale(j) = std::sqrt(var);
                }
            } else if (!(ms > 0.0)) {
                sys.skip[j] = 1;
            }
        }
        const Eigen::VectorXd inv = sys.scale.cwiseInverse();
        sys.G = inv.asDiagonal() * (s.ZtZ / s.rows) * inv.asDiagonal();
        sys.c = inv.cwiseProduct(s.Ztr) / s.rows;
        for (Eigen::Index j = 0; j < q; ++j) {
            if (!sys.skip[j]) continue;
            sys.G.row(j).setZero();
            sys.G.col(j).setZero();
            sys.c(j) = 0.0;
        }
        sys.rr = s.rtr / s.rows;
        return sys;
    }

    double objective(const Eigen::VectorXd& b, double lambda) const {
        return 0.5 * rr - c.dot(b) + 0.5 * b.dot(G * b) + lambda * b.lpNorm<1>();
    }

    double lambda_max() const { return c.cwiseAbs().maxCoeff(); }
};

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

struct SolveStats {
    int sweeps = 0;
    bool converged = false;
};

// Covariance-update coordinate descent with warm start. `grad` must equal
// c - G b on entry and is kept consistent.
SolveStats coordinate_descent(const System& sys, double lambda, Eigen::VectorXd& b, Eigen::VectorXd& grad,
                              const SolverOptions& opt, std::vector<double>* trace) {
    const auto q = sys.G.cols();
    SolveStats stats;
    std::vector<Eigen::Index> active;
    active.reserve(static_cast<std::size_t>(q));

    auto update = [&](Eigen::Index j) {
        const double gjj = sys.G(j, j);
        const double z = grad(j) + gjj * b(j);
        const double next = soft_threshold(z, lambda) / gjj;
        const double delta = next - b(j);
        if (delta != 0.0) {
            b(j) = next;
            grad.noalias() -= sys.G.col(j) * delta;
        }
        return std::abs(delta);
    };

#ifndef NDEBUG
    double previous = sys.objective(b, lambda);
#endif
    auto after_sweep = [&] {
        ++stats.sweeps;
        if (trace) trace->push_back(sys.objective(b, lambda));
#ifndef NDEBUG
        const double now = sys.objective(b, lambda);
        assert(now <= previous + 1e-12 * std::max(1.0, std::abs(previous)));
        previous = now;
#endif
    };

    // Minimiser of the smooth part plus lambda * s'b on the face where the
    // active coefficients keep their signs s and the rest stay zero. Applied
    // only when it lands inside the face, so the objective cannot rise.
    auto try_face = [&] {
        const auto m = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd GA(m, m);
        Eigen::VectorXd rhs(m);
        for (Eigen::Index u = 0; u < m; ++u) {
            const auto j = active[static_cast<std::size_t>(u)];
            if (b(j) == 0.0) return;
            for (Eigen::Index v = 0; v < m; ++v) GA(u, v) = sys.G(j, active[static_cast<std::size_t>(v)]);
            rhs(u) = sys.c(j) - lambda * (b(j) > 0.0 ? 1.0 : -1.0);
        }
        const Eigen::LLT<Eigen::MatrixXd> llt(GA);
        if (llt.info() != Eigen::Success) return;
        const Eigen::VectorXd x = llt.solve(rhs);
        for (Eigen::Index u = 0; u < m; ++u)
            if (!std::isfinite(x(u)) || x(u) * b(active[static_cast<std::size_t>(u)]) <= 0.0) return;
        for (Eigen::Index u = 0; u < m; ++u) b(active[static_cast<std::size_t>(u)]) = x(u);
        grad.noalias() = sys.c - sys.G * b;
#ifndef NDEBUG
        const double now = sys.objective(b, lambda);
        assert(now <= previous + 1e-12 * std::max(1.0, std::abs(previous)));
        previous = now;
#endif
    };

    while (stats.sweeps < opt.max_iter) {
        double change = 0.0;
        active.clear();
        for (Eigen::Index j = 0; j < q; ++j) {
            if (sys.skip[j]) continue;
            change = std::max(change, update(j));
            if (b(j) != 0.0) active.push_back(j);
        }
        after_sweep();
        if (change < opt.tol) {
            stats.converged = true;
            break;
        }
        // Iterate on the current active set until it settles, then recheck all.
        bool face_tried = !opt.face_solve || active.empty();
        while (stats.sweeps < opt.max_iter) {
            double inner = 0.0;
            for (auto j : active) inner = std::max(inner, update(j));
            after_sweep();
            if (inner < opt.tol) break;
            if (!face_tried) {
                try_face();
                face_tried = true;
            }
        }
    }
    return stats;
}

std::vector<int> nonzero_indices(const Eigen::VectorXd& b) {
    std::vector<int> idx;
    for (Eigen::Index j = 0; j < b.size(); ++j)
        if (b(j) != 0.0) idx.push_back(static_cast<int>(j));
    return idx;
}

LassoFit finish_fit(const System& sys, const Eigen::MatrixXd& Z, const Eigen::VectorXd& r, double lambda,
                    const Eigen::VectorXd& working, const SolveStats& stats) {
    LassoFit out;
    out.lambda = lambda;
    out.coefficients = working.cwiseQuotient(sys.scale);
    out.active_set = nonzero_indices(working);
    out.iterations = stats.sweeps;
    out.converged = stats.converged;
    for (std::size_t j = 0; j < sys.skip.size(); ++j)
        if (sys.skip[j]) out.skipped_columns.push_back(static_cast<int>(j));
    const double rss = (r - Z * out.coefficients).squaredNorm();
    out.objective = rss / (2.0 * static_cast<double>(r.size())) + lambda * working.lpNorm<1>();
    return out;
}

void check_problem(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r) {
    if (Z.rows() != r.size()) throw ConfigError(kModule, "design and target row counts differ");
    if (Z.rows() == 0 || Z.cols() == 0) throw ConfigError(kModule, "empty design");
    if (!Z.allFinite() || !r.allFinite()) throw NumericError(kModule, "non-finite input");
}

std::vector<double> geometric_path(double top, int n_lambda, double ratio) {
    std::vector<double> path(static_cast<std::size_t>(n_lambda));
    const double step = std::log(ratio) / (n_lambda - 1);
    for (int k = 0; k < n_lambda; ++k) path[k] = top * std::exp(step * k);
    path.front() = top;
    path.back() = top * ratio;
    return path;
}

}  // namespace

LassoFit fit(const LassoProblem& problem, const SolverOptions& options) {
    check_problem(problem.Z, problem.r);
    if (!(problem.lambda >= 0.0)) throw ConfigError(kModule, "lambda must be non-negative");
    const System sys = System::from(RawSums::of(problem.Z, problem.r), problem.standardize);

    Eigen::VectorXd b = Eigen::VectorXd::Zero(problem.Z.cols());
    Eigen::VectorXd grad = sys.c;
    std::vector<double> trace;
    const auto stats =
        coordinate_descent(sys, problem.lambda, b, grad, options, options.record_trace ? &trace : nullptr);
    LassoFit out = finish_fit(sys, problem.Z, problem.r, problem.lambda, b, stats);
    out.objective_trace = std::move(trace);
    return out;
}

double lambda_max(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r, bool standardize) {
    check_problem(Z, r);
    if (r.squaredNorm() == 0.0) throw NumericError(kModule, "target has zero variance");
    const double top = System::from(RawSums::of(Z, r), standardize).lambda_max();
    if (!(top > 0.0)) throw NumericError(kModule, "target is orthogonal to every column");
    return top;
}

std::string cv_rule_name(CvRule rule) { return rule == CvRule::min ? "min" : "one_se"; }

CvRule parse_cv_rule(const std::string& name) {
    if (name == "min") return CvRule::min;
    if (name == "one_se") return CvRule::one_se;
    throw ConfigError(kModule, "unknown CV rule '" + name + "' (valid: min, one_se)");
}

double default_path_ratio(Eigen::Index rows, Eigen::Index cols) { return rows > cols ? 1e-4 : 1e-2; }

std::vector<double> lambda_path(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r, bool standardize,
                                int n_lambda, double ratio) {
    if (n_lambda < 2) throw ConfigError(kModule, "n_lambda must be at least 2");
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError(kModule, "ratio must lie in (0, 1)");
    return geometric_path(lambda_max(Z, r, standardize), n_lambda, ratio);
}

CvResult cv_select_lambda(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r, std::span<const int> groups,
                          const CvConfig& config, Engine& rng) {
    if (static_cast<Eigen::Index>(groups.size()) != Z.rows())
        throw ConfigError(kModule, "one group id per row is required");
    std::vector<int> distinct(groups.begin(), groups.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (config.folds < 2) throw ConfigError(kModule, "at least two folds are required");
    if (config.folds > static_cast<int>(distinct.size())) {
        std::ostringstream msg;
        msg << config.folds << " folds requested but only " << distinct.size() << " units are present";
        throw ConfigError(kModule, msg.str());
    }
    std::shuffle(distinct.begin(), distinct.end(), rng);
    // distinct is shuffled; map group id -> fold by position.
    std::vector<std::pair<int, int>> lookup;
    lookup.reserve(distinct.size());
    for (std::size_t k = 0; k < distinct.size(); ++k)
        lookup.emplace_back(distinct[k], static_cast<int>(k % static_cast<std::size_t>(config.folds)));
    std::sort(lookup.begin(), lookup.end());
    std::vector<int> fold_of_row(groups.size());
    for (std::size_t row = 0; row < groups.size(); ++row) {
        auto it = std::lower_bound(lookup.begin(), lookup.end(), std::make_pair(groups[row], -1));
        fold_of_row[row] = it->second;
    }
    return cv_select_lambda_with_folds(Z, r, fold_of_row, config.folds, config);
}

CvResult cv_select_lambda_with_folds(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r,
                                     std::span<const int> fold_of_row, int folds, const CvConfig& config) {
    check_problem(Z, r);
    if (static_cast<Eigen::Index>(fold_of_row.size()) != Z.rows())
        throw ConfigError(kModule, "one fold id per row is required");
    if (folds < 2) throw ConfigError(kModule, "at least two folds are required");

    const double ratio = config.ratio > 0.0 ? config.ratio : default_path_ratio(Z.rows(), Z.cols());
    CvResult out;
    out.fold_of_row.assign(fold_of_row.begin(), fold_of_row.end());
    out.lambdas = lambda_path(Z, r, config.standardize, config.n_lambda, ratio);
    const auto L = out.lambdas.size();
    const auto q = Z.cols();

    const RawSums total = RawSums::of(Z, r);
    std::vector<std::vector<Eigen::Index>> held(static_cast<std::size_t>(folds));
    for (std::size_t row = 0; row < fold_of_row.size(); ++row) {
        const int f = fold_of_row[row];
        if (f < 0 || f >= folds) throw ConfigError(kModule, "fold id out of range");
        held[static_cast<std::size_t>(f)].push_back(static_cast<Eigen::Index>(row));
    }

    std::vector<double> sse(L, 0.0);
    Eigen::MatrixXd fold_mse = Eigen::MatrixXd::Zero(folds, static_cast<Eigen::Index>(L));
    std::vector<double> fold_rows(static_cast<std::size_t>(folds), 0.0);
    for (int f = 0; f < folds; ++f) {
        const auto& rows = held[static_cast<std::size_t>(f)];
        if (rows.empty()) continue;
        const Eigen::MatrixXd Zh = Z(rows, Eigen::all);
        const Eigen::VectorXd rh = r(rows);
        const RawSums train = total.minus(RawSums::of(Zh, rh));
        if (train.rows < 1.0) throw ConfigError(kModule, "a fold leaves no training rows");
        const System sys = System::from(train, config.standardize);

        Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
        Eigen::VectorXd grad = sys.c;
        fold_rows[static_cast<std::size_t>(f)] = static_cast<double>(rows.size());
        for (std::size_t l = 0; l < L; ++l) {
            coordinate_descent(sys, out.lambdas[l], b, grad, config.solver, nullptr);
            const double err = (rh - Zh * b.cwiseQuotient(sys.scale)).squaredNorm();
            sse[l] += err;
            fold_mse(f, static_cast<Eigen::Index>(l)) = err / static_cast<double>(rows.size());
        }
    }

    const double N = static_cast<double>(Z.rows());
    out.cv_error.resize(L);
    out.cv_se.resize(L);
    int used_folds = 0;
    for (double w : fold_rows) used_folds += w > 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        out.cv_error[l] = sse[l] / N;
        double spread = 0.0;
        for (int f = 0; f < folds; ++f) {
            const double w = fold_rows[static_cast<std::size_t>(f)];
            if (w == 0.0) continue;
            const double dev = fold_mse(f, static_cast<Eigen::Index>(l)) - out.cv_error[l];
            spread += w * dev * dev;
        }
        out.cv_se[l] = used_folds > 1 ? std::sqrt(spread / N / (used_folds - 1)) : 0.0;
    }

    std::size_t best = 0;
    for (std::size_t l = 1; l < L; ++l)
        if (out.cv_error[l] < out.cv_error[best]) best = l;
    if (config.rule == CvRule::one_se) {
        const double bound = out.cv_error[best] + out.cv_se[best];
        for (std::size_t l = 0; l <= best; ++l) {
            if (out.cv_error[l] <= bound) {
                best = l;
                break;
            }
        }
    }
    out.chosen_index = static_cast<int>(best);
    out.lambda = out.lambdas[best];

    // Full-data path with warm starts down to the chosen penalty.
    const System sys = System::from(total, config.standardize);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd grad = sys.c;
    SolveStats stats;
    int sweeps = 0;
    for (std::size_t l = 0; l <= best; ++l) {
        stats = coordinate_descent(sys, out.lambdas[l], b, grad, config.solver, nullptr);
        sweeps += stats.sweeps;
    }
    stats.sweeps = sweeps;
    out.fit = finish_fit(sys, Z, r, out.lambda, b, stats);
    return out;
}

KktReport check_kkt(const LassoProblem& problem, const LassoFit& fit, double tol) {
    const System sys = System::from(RawSums::of(problem.Z, problem.r), problem.standardize);
    const Eigen::VectorXd working = fit.coefficients.cwiseProduct(sys.scale);
    const Eigen::VectorXd grad = sys.c - sys.G * working;
    KktReport report;
    for (Eigen::Index j = 0; j < working.size(); ++j) {
        if (sys.skip[static_cast<std::size_t>(j)]) continue;
        double violation;
        if (working(j) != 0.0) {
            const double sign = working(j) > 0.0 ? 1.0 : -1.0;
            violation = std::abs(grad(j) - sign * fit.lambda);
        } else {
            violation = std::max(0.0, std::abs(grad(j)) - fit.lambda);
        }
        report.max_violation = std::max(report.max_violation, violation);
    }
    report.satisfied = report.max_violation <= tol;
    return report;
}

std::string trace_json(const LassoFit& fit) {
    nlohmann::ordered_json j;
    j["lambda"] = fit.lambda;
    j["objective"] = fit.objective;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    j["active_set"] = fit.active_set;
    j["skipped_columns"] = fit.skipped_columns;
    j["coefficients"] = std::vector<double>(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
    j["objective_trace"] = fit.objective_trace;
    return j.dump(2);
}

}  // namespace stabds::lasso
