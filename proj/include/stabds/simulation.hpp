#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stabds/inference.hpp"
#include "stabds/lasso.hpp"
#include "stabds/panel_data.hpp"
#include "stabds/selection.hpp"

namespace stabds::sim {

enum class DistortionTarget { none, active, inactive, response };

std::string target_name(DistortionTarget target);
DistortionTarget parse_target(const std::string& name);

enum class Method {
    pl_stab_05,
    db_stab_05,
    pl_stab_07,
    db_stab_07,
    post_lasso,
    double_selection,
    fixed_effects_all,
    oracle,
};

std::vector<Method> all_methods();
std::string method_name(Method method);
/// Throws ConfigError listing the valid names.
Method parse_method(const std::string& name);

/// Reading of the second argument of the fixed-effect normal law.
enum class FixedEffectScale { standard_deviation, variance };

struct SimConfig {
    int n = 16;
    int T = 10;
    int p = 30;
    double eta0 = 0.5;
    int replications = 1000;
    int subsamples = 1000;
    double subsample_fraction = 0.5;
    double inf = 0.0;
    DistortionTarget target = DistortionTarget::none;
    std::uint64_t seed = 0;
    inference::SeKind se_kind = inference::SeKind::design;
    std::vector<Method> methods = all_methods();
    int threads = 1;
    /// Penalty choice for the plain full-sample comparators.
    lasso::CvConfig cv{};
    /// Penalty choice inside each stability subsample.
    lasso::CvConfig stability_cv = selection::default_stability_cv();
    FixedEffectScale fixed_effect_scale = FixedEffectScale::standard_deviation;
    /// Heteroskedasticity weights (numerator and normalizer) built from the
    /// distorted covariates instead of the clean draws. Off by default: the
    /// weight functions take the undistorted x.
    bool scale_after_distortion = false;
    double alpha = 0.05;

    void validate() const;
    int distorted_periods() const;
};

nlohmann::ordered_json to_json(const SimConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});

struct Truth {
    Eigen::VectorXd eta1;
    Eigen::VectorXd eta2;
    std::vector<int> active;     // eta1 != 0
    std::vector<int> distorted;  // columns shifted by gamma
};

Truth make_truth(const SimConfig& config);

/// Covariance of the covariate vector: 0.5^|v-w| off the diagonal, 2 on the
/// first ten diagonal entries and 6 beyond.
Eigen::MatrixXd covariate_covariance(int p);

struct Replication {
    PanelDataset panel;
    Truth truth;
    Eigen::VectorXd gamma;  // p
    Eigen::VectorXd alpha;  // n
    Eigen::VectorXd sigma1, sigma2;  // per row
};

Replication generate_replication(const SimConfig& config, int replication);

struct MethodOutcome {
    bool failed = false;
    std::string error;
    double beta_hat = 0.0;
    std::vector<int> selected;
    double se_design = 0.0;
    double se_hc3 = 0.0;
    bool reject_design = false;
    bool reject_hc3 = false;
    double tpr = 0.0;
    double fpr = 0.0;
};

/// Lazily computed selections shared by the methods of one replication.
class ReplicationContext {
public:
    ReplicationContext(const DemeanedPanel& panel, const SimConfig& config, int replication);

    const selection::StabilityProfile& profile();
    const selection::SelectionResult& plain();
    const std::vector<int>& plain_structural();

private:
    const DemeanedPanel& panel_;
    const SimConfig& config_;
    int replication_;
    std::optional<selection::StabilityProfile> profile_;
    std::optional<selection::SelectionResult> plain_;
    std::optional<std::vector<int>> plain_structural_;
};

/// The selected set S for a method. PL methods take the covariates picked
/// by the outcome Lasso that also carries the (penalised) treatment; DB
/// methods take the union of the reduced-form and treatment selections.
std::vector<int> method_selection(Method method, const Truth& truth, const SimConfig& config,
                                  ReplicationContext& context);

MethodOutcome run_method(Method method, const DemeanedPanel& panel, const Truth& truth, const SimConfig& config,
                         ReplicationContext& context);

struct ReplicationRecord {
    std::vector<MethodOutcome> outcomes;  // parallel to config.methods
};

std::vector<ReplicationRecord> run_replications(const SimConfig& config);

struct MethodResult {
    Method method{};
    double abs_bias = 0.0;
    double rmse = 0.0;
    double n_covariates = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    double rejection_rate = 0.0;
    // Monte Carlo standard errors of the six metrics.
    double abs_bias_se = 0.0;
    double rmse_se = 0.0;
    double n_covariates_se = 0.0;
    double tpr_se = 0.0;
    double fpr_se = 0.0;
    double rejection_rate_se = 0.0;
    int replications = 0;
    int failures = 0;
};

struct SimulationReport {
    SimConfig config;
    inference::SeKind se_kind = inference::SeKind::design;
    std::vector<MethodResult> methods;

    const MethodResult& result(Method method) const;
};

SimulationReport summarize(const SimConfig& config, const std::vector<ReplicationRecord>& records,
                           inference::SeKind se_kind);

SimulationReport run_study(const SimConfig& config);

/// Wide table: one row per (target, method), one column per metric and inf.
std::string report_csv(const std::vector<SimulationReport>& reports);
std::string report_json(const std::vector<SimulationReport>& reports);

}  // namespace stabds::sim
