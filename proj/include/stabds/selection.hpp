#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stabds/lasso.hpp"
#include "stabds/panel_data.hpp"

namespace stabds::selection {

/// Subsample fits pick the largest penalty within one standard error of the
/// CV minimum.
inline lasso::CvConfig default_stability_cv() {
    lasso::CvConfig cv;
    cv.rule = lasso::CvRule::one_se;
    return cv;
}

struct StabilityConfig {
    int subsamples = 1000;
    /// Rows per subsample; 0 means floor(0.5 * nT).
    int subsample_size = 0;
    lasso::CvConfig cv = default_stability_cv();
    std::uint64_t seed = 0;
    /// Extra stream key, e.g. the replication index in a simulation study.
    std::uint64_t stream_tag = 0;
    int threads = 1;
    /// Redraws allowed per subsample when the target is degenerate.
    int max_redraws = 20;
    /// Also fit the outcome on treatment and covariates together (the
    /// single-equation post-Lasso comparator) on every subsample.
    bool structural_outcome = false;
};

/// Per-variable inclusion frequencies over C subsamples for the outcome
/// (reduced form) and treatment selection equations.
struct StabilityProfile {
    std::vector<double> freq_outcome;
    std::vector<double> freq_treatment;
    /// Outcome on [treatment, covariates]; covariate frequencies only.
    /// Empty unless requested.
    std::vector<double> freq_outcome_structural;
    int subsamples = 0;
    int subsample_size = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> variables;
};

/// Subsamples rows of the demeaned panel without replacement, refits both
/// Lasso equations with a cross-validated penalty on each subsample and
/// counts non-zero coefficients.
StabilityProfile stability_frequencies(const DemeanedPanel& panel, const StabilityConfig& config);

/// Gap rule for the effective threshold: order the frequencies, look at the
/// gaps between neighbours whose lower member exceeds `pi_min`, and cut
/// below the last largest gap. Returns `pi_min` when no frequency past the
/// first exceeds the floor.
double choose_threshold(std::vector<double> frequencies, double pi_min);

struct SelectionResult {
    std::vector<int> S_y;
    std::vector<int> S_d;
    std::vector<int> S;  // sorted union
    double pi1 = 0.0;
    double pi2 = 0.0;
    double pi1_min = 0.0;
    double pi2_min = 0.0;
};

/// Strict exceedance of fixed thresholds in either equation.
SelectionResult double_select(const StabilityProfile& profile, double pi1, double pi2);

/// Thresholds chosen by the gap rule above the given floors, then double_select.
SelectionResult gap_double_select(const StabilityProfile& profile, double pi1_min, double pi2_min);

/// One full-sample cross-validated Lasso per equation; S is the union of
/// the two active sets.
SelectionResult plain_double_select(const DemeanedPanel& panel, const lasso::CvConfig& cv, Engine& rng);

/// Covariate indices active in a full-sample cross-validated Lasso of the
/// outcome on the penalised treatment and the covariates.
std::vector<int> plain_structural_select(const DemeanedPanel& panel, const lasso::CvConfig& cv, Engine& rng);

/// Columns with frequency strictly above `pi`.
std::vector<int> above(const std::vector<double>& frequencies, double pi);

/// Floors for the outcome threshold by data set and theta, and for the
/// treatment threshold by data set.
enum class FloorPreset { all, fees, small };
double outcome_floor(FloorPreset preset, double theta);
double treatment_floor(FloorPreset preset);
FloorPreset parse_floor_preset(const std::string& name);

std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b);

/// CSV `variable,freq_outcome,freq_treatment`.
std::string profile_csv(const StabilityProfile& profile);
/// JSON sidecar with thresholds and selected variables.
std::string thresholds_json(const StabilityProfile& profile, const SelectionResult& result);

}  // namespace stabds::selection
