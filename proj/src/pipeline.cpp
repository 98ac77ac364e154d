#include "stabds/pipeline.hpp"

#include <cmath>
#include <numeric>

#include "stabds/errors.hpp"

namespace stabds::pipeline {

namespace {

nlohmann::ordered_json estimate_block(const inference::CausalEstimate& est, const std::vector<std::string>& variables) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["beta0"] = num(est.beta0);
    j["se_design"] = num(est.se_design);
    j["se_hc3"] = num(est.se_hc3);
    j["se_in_use"] = inference::se_kind_name(est.se_in_use);
    j["df"] = est.df;
    j["t"] = num(est.t_stat);
    j["p"] = num(est.p_value);
    j["ci"] = {num(est.ci.first), num(est.ci.second)};
    j["level"] = est.level;
    std::vector<std::string> names;
    for (int k : est.selected) names.push_back(variables[static_cast<std::size_t>(k)]);
    j["selected_variables"] = names;
    auto& coef = j["coefficients"] = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < names.size(); ++k) coef[names[k]] = num(est.coefficients(static_cast<Eigen::Index>(k)));
    return j;
}

}  // namespace

EstimateRun run_estimate(const PanelDataset& panel, const EstimateConfig& config) {
    const DemeanedPanel demeaned = within_transform(panel);
    EstimateRun run;
    run.profile = selection::stability_frequencies(demeaned, config.stability);
    if (config.mode == ThresholdMode::gap) {
        run.selection = selection::gap_double_select(run.profile, config.pi1, config.pi2);
    } else {
        if (!(config.pi1 > 0.0 && config.pi1 < 1.0 && config.pi2 > 0.0 && config.pi2 < 1.0))
            throw ConfigError("selection", "thresholds must lie in (0, 1)");
        run.selection = selection::double_select(run.profile, config.pi1, config.pi2);
    }
    run.estimate = inference::estimate_effect(demeaned, run.selection.S, config.se, config.level);
    if (config.all_controls) {
        std::vector<int> all(static_cast<std::size_t>(demeaned.covariates()));
        std::iota(all.begin(), all.end(), 0);
        run.all_controls = inference::estimate_effect(demeaned, all, config.se, config.level);
    }
    return run;
}

nlohmann::ordered_json estimate_json(const EstimateRun& run, const std::vector<std::string>& variables) {
    nlohmann::ordered_json j = estimate_block(run.estimate, variables);
    auto names = [&](const std::vector<int>& idx) {
        std::vector<std::string> out;
        for (int k : idx) out.push_back(variables[static_cast<std::size_t>(k)]);
        return out;
    };
    nlohmann::ordered_json sel;
    sel["pi1"] = run.selection.pi1;
    sel["pi2"] = run.selection.pi2;
    sel["pi1_min"] = run.selection.pi1_min;
    sel["pi2_min"] = run.selection.pi2_min;
    sel["outcome"] = names(run.selection.S_y);
    sel["treatment"] = names(run.selection.S_d);
    sel["subsamples"] = run.profile.subsamples;
    sel["subsample_size"] = run.profile.subsample_size;
    j["selection"] = sel;
    if (run.all_controls) j["all_controls"] = estimate_block(*run.all_controls, variables);
    return j;
}

}  // namespace stabds::pipeline
