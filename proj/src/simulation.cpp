#include "stabds/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "stabds/errors.hpp"
#include "stabds/format.hpp"
#include "stabds/parallel.hpp"
#include "stabds/rng.hpp"

namespace stabds::sim {

namespace {

constexpr const char* kModule = "simulation";

constexpr Method kMethods[] = {Method::pl_stab_05,      Method::db_stab_05,       Method::pl_stab_07,
                               Method::db_stab_07,      Method::post_lasso,       Method::double_selection,
                               Method::fixed_effects_all, Method::oracle};

double stability_threshold(Method m) {
    return (m == Method::pl_stab_05 || m == Method::db_stab_05) ? 0.5 : 0.7;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Standard error of a sample mean (sample sd / sqrt(R)).
double mean_se(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

std::string target_name(DistortionTarget target) {
    switch (target) {
        case DistortionTarget::none: return "none";
        case DistortionTarget::active: return "active";
        case DistortionTarget::inactive: return "inactive";
        case DistortionTarget::response: return "response";
    }
    return "none";
}

DistortionTarget parse_target(const std::string& name) {
    if (name == "none") return DistortionTarget::none;
    if (name == "active") return DistortionTarget::active;
    if (name == "inactive") return DistortionTarget::inactive;
    if (name == "response") return DistortionTarget::response;
    throw ConfigError(kModule, "unknown distortion target '" + name + "' (valid: none, active, inactive, response)");
}

std::vector<Method> all_methods() { return {std::begin(kMethods), std::end(kMethods)}; }

std::string method_name(Method method) {
    switch (method) {
        case Method::pl_stab_05: return "PL_Stab_0.5";
        case Method::db_stab_05: return "DB_Stab_0.5";
        case Method::pl_stab_07: return "PL_Stab_0.7";
        case Method::db_stab_07: return "DB_Stab_0.7";
        case Method::post_lasso: return "PostLasso";
        case Method::double_selection: return "DoubleSelection";
        case Method::fixed_effects_all: return "FixedEffectsAll";
        case Method::oracle: return "Oracle";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : kMethods)
        if (method_name(m) == name) return m;
    std::ostringstream msg;
    msg << "unknown method '" << name << "'; valid methods:";
    for (Method m : kMethods) msg << ' ' << method_name(m);
    throw ConfigError(kModule, msg.str());
}

void SimConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError(kModule, what); };
    if (n < 2 || T < 2) fail("n and T must be at least 2");
    if (p < 10) fail("p must be at least 10 (the true active set has ten members)");
    if (replications < 1) fail("replications must be at least 1");
    if (subsamples < 1) fail("subsamples must be at least 1");
    if (!(subsample_fraction > 0.0 && subsample_fraction < 1.0)) fail("subsample_fraction must lie in (0, 1)");
    if (!(inf >= 0.0)) fail("inf must be non-negative");
    if (threads < 1) fail("threads must be at least 1");
    if (methods.empty()) fail("at least one method is required");
    if (cv.folds < 2 || cv.folds > n || stability_cv.folds < 2 || stability_cv.folds > n)
        fail("folds must lie in [2, n]");
    if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
}

int SimConfig::distorted_periods() const {
    return std::max(1, static_cast<int>(std::lround(0.1 * T)));
}

nlohmann::ordered_json to_json(const SimConfig& c) {
    nlohmann::ordered_json j;
    j["n"] = c.n;
    j["T"] = c.T;
    j["p"] = c.p;
    j["eta0"] = c.eta0;
    j["replications"] = c.replications;
    j["subsamples"] = c.subsamples;
    j["subsample_fraction"] = c.subsample_fraction;
    j["inf"] = c.inf;
    j["target"] = target_name(c.target);
    j["seed"] = c.seed;
    j["se_kind"] = inference::se_kind_name(c.se_kind);
    std::vector<std::string> names;
    for (Method m : c.methods) names.push_back(method_name(m));
    j["methods"] = names;
    j["folds"] = c.cv.folds;
    j["n_lambda"] = c.cv.n_lambda;
    j["lambda_ratio"] = c.cv.ratio;
    j["cv_rule"] = lasso::cv_rule_name(c.cv.rule);
    j["stability_cv_rule"] = lasso::cv_rule_name(c.stability_cv.rule);
    j["fixed_effect_scale"] = c.fixed_effect_scale == FixedEffectScale::standard_deviation ? "sd" : "variance";
    j["scale_after_distortion"] = c.scale_after_distortion;
    j["alpha"] = c.alpha;
    return j;
}

SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig c) {
    if (!j.is_object()) throw ConfigError(kModule, "simulation config must be a JSON object");
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            const auto& v = it.value();
            if (key == "n") c.n = v.get<int>();
            else if (key == "T") c.T = v.get<int>();
            else if (key == "p") c.p = v.get<int>();
            else if (key == "eta0") c.eta0 = v.get<double>();
            else if (key == "replications") c.replications = v.get<int>();
            else if (key == "subsamples") c.subsamples = v.get<int>();
            else if (key == "subsample_fraction") c.subsample_fraction = v.get<double>();
            else if (key == "inf") c.inf = v.get<double>();
            else if (key == "target") c.target = parse_target(v.get<std::string>());
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "se_kind") c.se_kind = inference::parse_se_kind(v.get<std::string>());
            else if (key == "methods") {
                c.methods.clear();
                for (const auto& name : v) c.methods.push_back(parse_method(name.get<std::string>()));
            } else if (key == "threads") c.threads = v.get<int>();
            else if (key == "folds") c.cv.folds = c.stability_cv.folds = v.get<int>();
            else if (key == "n_lambda") c.cv.n_lambda = c.stability_cv.n_lambda = v.get<int>();
            else if (key == "lambda_ratio") c.cv.ratio = c.stability_cv.ratio = v.get<double>();
            else if (key == "cv_rule") c.cv.rule = lasso::parse_cv_rule(v.get<std::string>());
            else if (key == "stability_cv_rule") c.stability_cv.rule = lasso::parse_cv_rule(v.get<std::string>());
            else if (key == "fixed_effect_scale") {
                const auto s = v.get<std::string>();
                if (s == "sd") c.fixed_effect_scale = FixedEffectScale::standard_deviation;
                else if (s == "variance") c.fixed_effect_scale = FixedEffectScale::variance;
                else throw ConfigError(kModule, "fixed_effect_scale must be 'sd' or 'variance'");
            } else if (key == "scale_after_distortion") c.scale_after_distortion = v.get<bool>();
            else if (key == "alpha") c.alpha = v.get<double>();
            else throw ConfigError(kModule, "unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(kModule, std::string("bad config value: ") + e.what());
    }
    return c;
}

Truth make_truth(const SimConfig& config) {
    Truth truth;
    truth.eta1 = Eigen::VectorXd::Zero(config.p);
    truth.eta2 = Eigen::VectorXd::Zero(config.p);
    for (int g = 1; g <= config.p; ++g) {
        if (g <= 10) truth.eta1(g - 1) = 5.0 / g;
        if (g >= 7 && g <= 10) truth.eta2(g - 1) = 5.0 / (g - 6);
    }
    for (int j = 0; j < config.p; ++j) {
        const bool relevant = truth.eta1(j) != 0.0 || truth.eta2(j) != 0.0;
        if (truth.eta1(j) != 0.0) truth.active.push_back(j);
        const bool shifted = (config.target == DistortionTarget::active && relevant) ||
                             (config.target == DistortionTarget::inactive && !relevant);
        if (shifted) truth.distorted.push_back(j);
    }
    return truth;
}

Eigen::MatrixXd covariate_covariance(int p) {
    Eigen::MatrixXd sigma(p, p);
    for (int v = 0; v < p; ++v)
        for (int w = 0; w < p; ++w)
            sigma(v, w) = v == w ? (v < 10 ? 2.0 : 6.0) : std::pow(0.5, std::abs(w - v));
    return sigma;
}

Replication generate_replication(const SimConfig& config, int replication) {
    config.validate();
    const int n = config.n, T = config.T, p = config.p;
    const auto N = static_cast<Eigen::Index>(n) * T;
    const auto r = static_cast<std::uint64_t>(replication);

    Replication rep;
    rep.truth = make_truth(config);
    const auto& eta1 = rep.truth.eta1;
    const auto& eta2 = rep.truth.eta2;

    std::normal_distribution<double> normal(0.0, 1.0);

    Engine fe_rng = make_stream(config.seed, {stream::fixed_effects, r});
    const double fe_scale = config.fixed_effect_scale == FixedEffectScale::standard_deviation
                                ? std::sqrt(4.0 / T)
                                : std::sqrt(std::sqrt(4.0 / T));
    Eigen::VectorXd alpha(n);
    for (int i = 0; i < n; ++i) alpha(i) = fe_scale * normal(fe_rng);

    Engine x_rng = make_stream(config.seed, {stream::covariates, r});
    const Eigen::MatrixXd L = covariate_covariance(p).llt().matrixL();
    Eigen::MatrixXd X(N, p);
    Eigen::VectorXd z(p);
    for (Eigen::Index row = 0; row < N; ++row) {
        for (int g = 0; g < p; ++g) z(g) = normal(x_rng);
        X.row(row) = (L * z).transpose();
    }

    Engine e_rng = make_stream(config.seed, {stream::errors, r});
    Eigen::VectorXd eps1(N), eps2(N);
    for (Eigen::Index row = 0; row < N; ++row) eps1(row) = normal(e_rng);
    for (Eigen::Index row = 0; row < N; ++row) eps2(row) = normal(e_rng);

    // Distortion draws come from their own streams so the base data do not
    // depend on the scenario.
    Engine g_rng = make_stream(config.seed, {stream::distortion, r});
    rep.gamma = Eigen::VectorXd::Zero(p);
    {
        std::uniform_real_distribution<double> shift(2.0 / 3.0 * config.inf, config.inf);
        std::vector<bool> in_set(static_cast<std::size_t>(p), false);
        for (int j : rep.truth.distorted) in_set[static_cast<std::size_t>(j)] = true;
        for (int j = 0; j < p; ++j) {
            const double draw = config.inf > 0.0 ? shift(g_rng) : 0.0;
            if (in_set[static_cast<std::size_t>(j)]) rep.gamma(j) = draw;
        }
    }
    const int first_distorted = T - config.distorted_periods();
    Eigen::MatrixXd Xt = X;
    for (int i = 0; i < n; ++i)
        for (int t = first_distorted; t < T; ++t) Xt.row(static_cast<Eigen::Index>(i) * T + t) += rep.gamma.transpose();

    const Eigen::MatrixXd& Xh = config.scale_after_distortion ? Xt : X;

    const Eigen::ArrayXd base2 = 1.0 + (Xh * eta2).array();
    const Eigen::ArrayXd sigma2 = (base2.square() / base2.square().mean()).sqrt();
    const Eigen::VectorXd d = Xt * eta2 + (sigma2 * eps2.array()).matrix();

    Eigen::VectorXd alpha_rows(N);
    for (int i = 0; i < n; ++i) alpha_rows.segment(static_cast<Eigen::Index>(i) * T, T).setConstant(alpha(i));
    const Eigen::ArrayXd base1 = 1.0 + config.eta0 * d.array() + (Xh * eta1).array() + alpha_rows.array();
    const Eigen::ArrayXd sigma1 = (base1.square() / base1.square().mean()).sqrt();
    Eigen::VectorXd y = config.eta0 * d + Xt * eta1 + alpha_rows + (sigma1 * eps1.array()).matrix();
    rep.alpha = alpha;
    rep.sigma1 = sigma1.matrix();
    rep.sigma2 = sigma2.matrix();

    Engine z_rng = make_stream(config.seed, {stream::response_distortion, r});
    std::uniform_real_distribution<double> zeta(-config.inf, config.inf);
    for (int i = 0; i < n; ++i) {
        for (int t = first_distorted; t < T; ++t) {
            const double draw = config.inf > 0.0 ? zeta(z_rng) : 0.0;
            if (config.target == DistortionTarget::response) y(static_cast<Eigen::Index>(i) * T + t) += draw;
        }
    }

    PanelDataset& panel = rep.panel;
    panel.n = n;
    panel.T = T;
    panel.y = std::move(y);
    panel.d = d;
    panel.X = std::move(Xt);
    for (int i = 0; i < n; ++i) panel.unit_labels.push_back(std::to_string(i + 1));
    for (int t = 0; t < T; ++t) panel.time_labels.push_back(std::to_string(t + 1));
    for (int g = 0; g < p; ++g) panel.column_names.push_back("x" + std::to_string(g + 1));
    return rep;
}

ReplicationContext::ReplicationContext(const DemeanedPanel& panel, const SimConfig& config, int replication)
    : panel_(panel), config_(config), replication_(replication) {}

const selection::StabilityProfile& ReplicationContext::profile() {
    if (!profile_) {
        selection::StabilityConfig sc;
        sc.subsamples = config_.subsamples;
        sc.subsample_size = static_cast<int>(std::floor(config_.subsample_fraction * static_cast<double>(panel_.rows())));
        sc.cv = config_.stability_cv;
        sc.seed = config_.seed;
        sc.stream_tag = static_cast<std::uint64_t>(replication_);
        sc.threads = 1;
        for (Method m : config_.methods)
            if (m == Method::pl_stab_05 || m == Method::pl_stab_07) sc.structural_outcome = true;
        profile_ = selection::stability_frequencies(panel_, sc);
    }
    return *profile_;
}

const selection::SelectionResult& ReplicationContext::plain() {
    if (!plain_) {
        Engine rng = make_stream(config_.seed, {stream::plain_cv, static_cast<std::uint64_t>(replication_)});
        plain_ = selection::plain_double_select(panel_, config_.cv, rng);
    }
    return *plain_;
}

const std::vector<int>& ReplicationContext::plain_structural() {
    if (!plain_structural_) {
        Engine rng = make_stream(config_.seed, {stream::plain_cv, static_cast<std::uint64_t>(replication_), 1});
        plain_structural_ = selection::plain_structural_select(panel_, config_.cv, rng);
    }
    return *plain_structural_;
}

std::vector<int> method_selection(Method method, const Truth& truth, const SimConfig& config,
                                  ReplicationContext& context) {
    switch (method) {
        case Method::pl_stab_05:
        case Method::pl_stab_07: {
            return selection::above(context.profile().freq_outcome_structural, stability_threshold(method));
        }
        case Method::db_stab_05:
        case Method::db_stab_07: {
            const double pi = stability_threshold(method);
            return selection::double_select(context.profile(), pi, pi).S;
        }
        case Method::post_lasso: return context.plain_structural();
        case Method::double_selection: return context.plain().S;
        case Method::fixed_effects_all: {
            std::vector<int> all(static_cast<std::size_t>(config.p));
            for (int j = 0; j < config.p; ++j) all[static_cast<std::size_t>(j)] = j;
            return all;
        }
        case Method::oracle: return truth.active;
    }
    return {};
}

MethodOutcome run_method(Method method, const DemeanedPanel& panel, const Truth& truth, const SimConfig& config,
                         ReplicationContext& context) {
    MethodOutcome out;
    try {
        out.selected = method_selection(method, truth, config, context);
        const auto est = inference::estimate_effect(panel, out.selected, config.se_kind);
        out.beta_hat = est.beta0;
        out.se_design = est.se_design;
        out.se_hc3 = est.se_hc3;
        out.reject_design = inference::t_test(est, config.eta0, inference::SeKind::design, config.alpha).reject;
        out.reject_hc3 = inference::t_test(est, config.eta0, inference::SeKind::hc3, config.alpha).reject;

        std::set<int> active(truth.active.begin(), truth.active.end());
        int true_pos = 0, false_pos = 0;
        for (int j : out.selected) (active.count(j) ? true_pos : false_pos)++;
        const int inactive = config.p - static_cast<int>(active.size());
        out.tpr = active.empty() ? 0.0 : static_cast<double>(true_pos) / static_cast<double>(active.size());
        out.fpr = inactive == 0 ? 0.0 : static_cast<double>(false_pos) / inactive;
    } catch (const Error& e) {
        out.failed = true;
        out.error = e.what();
    }
    return out;
}

std::vector<ReplicationRecord> run_replications(const SimConfig& config) {
    config.validate();
    std::vector<ReplicationRecord> records(static_cast<std::size_t>(config.replications));
    parallel_for(records.size(), config.threads, [&](std::size_t r) {
        const Replication rep = generate_replication(config, static_cast<int>(r));
        const DemeanedPanel panel = within_transform(rep.panel);
        ReplicationContext context(panel, config, static_cast<int>(r));
        auto& outcomes = records[r].outcomes;
        for (Method m : config.methods) {
            MethodOutcome o;
            try {
                o = run_method(m, panel, rep.truth, config, context);
            } catch (const Error& e) {
                // Selection failures hit every method sharing the selection.
                o.failed = true;
                o.error = e.what();
            }
            outcomes.push_back(std::move(o));
        }
    });
    return records;
}

const MethodResult& SimulationReport::result(Method method) const {
    for (const auto& m : methods)
        if (m.method == method) return m;
    throw ConfigError(kModule, "method " + method_name(method) + " not in report");
}

SimulationReport summarize(const SimConfig& config, const std::vector<ReplicationRecord>& records,
                           inference::SeKind se_kind) {
    SimulationReport report;
    report.config = config;
    report.config.se_kind = se_kind;
    report.se_kind = se_kind;
    for (std::size_t k = 0; k < config.methods.size(); ++k) {
        MethodResult res;
        res.method = config.methods[k];
        std::vector<double> err, abs_err, sq_err, ncov, tpr, fpr, rej;
        for (const auto& rec : records) {
            const auto& o = rec.outcomes[k];
            if (o.failed) {
                ++res.failures;
                continue;
            }
            const double e = o.beta_hat - config.eta0;
            err.push_back(e);
            abs_err.push_back(std::abs(e));
            sq_err.push_back(e * e);
            ncov.push_back(static_cast<double>(o.selected.size()));
            tpr.push_back(o.tpr);
            fpr.push_back(o.fpr);
            rej.push_back((se_kind == inference::SeKind::design ? o.reject_design : o.reject_hc3) ? 1.0 : 0.0);
        }
        res.replications = static_cast<int>(err.size());
        if (!err.empty()) {
            const double bias = mean(err);
            double var = 0.0;
            for (double e : err) var += (e - bias) * (e - bias);
            var /= static_cast<double>(err.size());
            res.abs_bias = mean(abs_err);
            res.rmse = std::sqrt(bias * bias + var);
            res.n_covariates = mean(ncov);
            res.tpr = mean(tpr);
            res.fpr = mean(fpr);
            res.rejection_rate = mean(rej);
            res.abs_bias_se = mean_se(abs_err);
            res.rmse_se = res.rmse > 0.0 ? mean_se(sq_err) / (2.0 * res.rmse) : 0.0;
            res.n_covariates_se = mean_se(ncov);
            res.tpr_se = mean_se(tpr);
            res.fpr_se = mean_se(fpr);
            res.rejection_rate_se = mean_se(rej);
        }
        report.methods.push_back(res);
    }
    return report;
}

SimulationReport run_study(const SimConfig& config) {
    return summarize(config, run_replications(config), config.se_kind);
}

namespace {

struct Metric {
    const char* name;
    double MethodResult::*value;
    double MethodResult::*se;
};

constexpr Metric kMetrics[] = {
    {"abs_bias", &MethodResult::abs_bias, &MethodResult::abs_bias_se},
    {"rmse", &MethodResult::rmse, &MethodResult::rmse_se},
    {"n_covariates", &MethodResult::n_covariates, &MethodResult::n_covariates_se},
    {"tpr", &MethodResult::tpr, &MethodResult::tpr_se},
    {"fpr", &MethodResult::fpr, &MethodResult::fpr_se},
    {"rejection_rate", &MethodResult::rejection_rate, &MethodResult::rejection_rate_se},
};

}  // namespace

std::string report_csv(const std::vector<SimulationReport>& reports) {
    std::vector<double> infs;
    std::vector<std::string> targets;
    std::vector<Method> methods;
    for (const auto& rep : reports) {
        if (std::find(infs.begin(), infs.end(), rep.config.inf) == infs.end()) infs.push_back(rep.config.inf);
        const auto t = target_name(rep.config.target);
        if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
        for (const auto& m : rep.methods)
            if (std::find(methods.begin(), methods.end(), m.method) == methods.end()) methods.push_back(m.method);
    }
    std::sort(infs.begin(), infs.end());

    std::ostringstream out;
    out << "target,method";
    for (const auto& metric : kMetrics)
        for (double inf : infs) out << ',' << metric.name << "_inf" << format_double(inf);
    out << ",failures\n";
    for (const auto& target : targets) {
        for (Method m : methods) {
            out << target << ',' << method_name(m);
            int failures = 0;
            for (const auto& metric : kMetrics) {
                for (double inf : infs) {
                    out << ',';
                    for (const auto& rep : reports) {
                        if (target_name(rep.config.target) != target || rep.config.inf != inf) continue;
                        for (const auto& res : rep.methods) {
                            if (res.method != m) continue;
                            out << format_double(res.*(metric.value));
                            if (&metric == &kMetrics[0]) failures += res.failures;
                        }
                    }
                }
            }
            out << ',' << failures << '\n';
        }
    }
    return out.str();
}

std::string report_json(const std::vector<SimulationReport>& reports) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& rep : reports) {
        nlohmann::ordered_json j;
        j["target"] = target_name(rep.config.target);
        j["inf"] = rep.config.inf;
        j["se_kind"] = inference::se_kind_name(rep.se_kind);
        j["config"] = to_json(rep.config);
        auto& methods = j["methods"] = nlohmann::ordered_json::array();
        for (const auto& res : rep.methods) {
            nlohmann::ordered_json m;
            m["method"] = method_name(res.method);
            for (const auto& metric : kMetrics) {
                m[metric.name] = res.*(metric.value);
                m[std::string(metric.name) + "_mc_se"] = res.*(metric.se);
            }
            m["replications"] = res.replications;
            m["failures"] = res.failures;
            methods.push_back(m);
        }
        arr.push_back(j);
    }
    return arr.dump(2) + "\n";
}

}  // namespace stabds::sim
