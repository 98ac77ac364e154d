#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "stabds/inference.hpp"
#include "stabds/panel_data.hpp"
#include "stabds/selection.hpp"

namespace stabds::pipeline {

enum class ThresholdMode { gap, fixed };

struct EstimateConfig {
    selection::StabilityConfig stability{};
    ThresholdMode mode = ThresholdMode::gap;
    /// Floors for the gap rule, or the thresholds themselves in fixed mode.
    double pi1 = 0.9;
    double pi2 = 0.9;
    inference::SeKind se = inference::SeKind::design;
    double level = 0.95;
    /// Also fit the regression on every covariate for comparison.
    bool all_controls = true;
};

struct EstimateRun {
    selection::StabilityProfile profile;
    selection::SelectionResult selection;
    inference::CausalEstimate estimate;
    std::optional<inference::CausalEstimate> all_controls;
};

/// Demeaning, stability frequencies, thresholds, double selection and the
/// post-selection regression with both standard errors.
EstimateRun run_estimate(const PanelDataset& panel, const EstimateConfig& config);

nlohmann::ordered_json estimate_json(const EstimateRun& run, const std::vector<std::string>& variables);

}  // namespace stabds::pipeline
