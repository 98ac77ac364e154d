#include "stabds/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "stabds/errors.hpp"
#include "stabds/format.hpp"
#include "stabds/parallel.hpp"

namespace stabds::selection {

namespace {

constexpr const char* kModule = "selection";

struct SubsampleDraw {
    std::vector<Eigen::Index> rows;
    std::vector<int> units;
};

SubsampleDraw draw_rows(Engine& rng, const std::vector<int>& unit_of_row, int size) {
    std::vector<Eigen::Index> pool(unit_of_row.size());
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    // Partial Fisher-Yates: the first `size` slots form the subsample.
    for (int k = 0; k < size; ++k) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
        std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
    }
    SubsampleDraw draw;
    draw.rows.assign(pool.begin(), pool.begin() + size);
    std::sort(draw.rows.begin(), draw.rows.end());
    draw.units.reserve(draw.rows.size());
    for (auto r : draw.rows) draw.units.push_back(unit_of_row[static_cast<std::size_t>(r)]);
    return draw;
}

bool degenerate_target(const Eigen::VectorXd& r) {
    return (r.array() - r.mean()).square().sum() == 0.0 || r.squaredNorm() == 0.0;
}

// Treatment in column 0, covariates after it.
Eigen::MatrixXd structural_design(const Eigen::VectorXd& d, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd W(X.rows(), X.cols() + 1);
    W.col(0) = d;
    W.rightCols(X.cols()) = X;
    return W;
}

int distinct_count(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace

StabilityProfile stability_frequencies(const DemeanedPanel& panel, const StabilityConfig& config) {
    panel.validate();
    const auto N = static_cast<int>(panel.rows());
    const int size = config.subsample_size > 0 ? config.subsample_size : N / 2;
    if (config.subsamples < 1) throw ConfigError(kModule, "at least one subsample is required");
    if (size < 2 || size >= N) {
        std::ostringstream msg;
        msg << "subsample size " << size << " must lie in [2, " << N << ")";
        throw ConfigError(kModule, msg.str());
    }

    const int p = panel.covariates();
    const auto unit_of_row = panel.unit_of_rows();
    const auto C = static_cast<std::size_t>(config.subsamples);
    // Per-subsample indicators; reduced in index order afterwards.
    std::vector<std::vector<char>> hits_y(C), hits_d(C), hits_s(C);

    parallel_for(C, config.threads, [&](std::size_t c) {
        Engine rng = make_stream(config.seed, {stream::stability, config.stream_tag, c});
        for (int attempt = 0;; ++attempt) {
            if (attempt > config.max_redraws) {
                std::ostringstream msg;
                msg << "subsample " << c << " stayed degenerate after " << config.max_redraws << " redraws";
                throw NumericError(kModule, msg.str());
            }
            const SubsampleDraw draw = draw_rows(rng, unit_of_row, size);
            const Eigen::MatrixXd Z = panel.X(draw.rows, Eigen::all);
            const Eigen::VectorXd ry = panel.y(draw.rows);
            const Eigen::VectorXd rd = panel.d(draw.rows);
            if (degenerate_target(ry) || degenerate_target(rd) ||
                distinct_count(draw.units) < config.cv.folds)
                continue;
            const auto fy = lasso::cv_select_lambda(Z, ry, draw.units, config.cv, rng);
            const auto fd = lasso::cv_select_lambda(Z, rd, draw.units, config.cv, rng);
            auto& hy = hits_y[c];
            auto& hd = hits_d[c];
            hy.assign(static_cast<std::size_t>(p), 0);
            hd.assign(static_cast<std::size_t>(p), 0);
            for (int j : fy.fit.active_set) hy[static_cast<std::size_t>(j)] = 1;
            for (int j : fd.fit.active_set) hd[static_cast<std::size_t>(j)] = 1;
            if (config.structural_outcome) {
                const auto fs = lasso::cv_select_lambda(structural_design(rd, Z), ry, draw.units, config.cv, rng);
                auto& hs = hits_s[c];
                hs.assign(static_cast<std::size_t>(p), 0);
                for (int j : fs.fit.active_set)
                    if (j > 0) hs[static_cast<std::size_t>(j - 1)] = 1;
            }
            return;
        }
    });

    StabilityProfile out;
    out.subsamples = config.subsamples;
    out.subsample_size = size;
    out.seed = config.seed;
    out.variables = panel.column_names;
    auto frequencies = [&](const std::vector<std::vector<char>>& hits) {
        std::vector<int> count(static_cast<std::size_t>(p), 0);
        for (const auto& h : hits)
            for (int j = 0; j < p; ++j) count[static_cast<std::size_t>(j)] += h[static_cast<std::size_t>(j)];
        std::vector<double> freq;
        for (int k : count) freq.push_back(static_cast<double>(k) / config.subsamples);
        return freq;
    };
    out.freq_outcome = frequencies(hits_y);
    out.freq_treatment = frequencies(hits_d);
    if (config.structural_outcome) out.freq_outcome_structural = frequencies(hits_s);
    return out;
}

double choose_threshold(std::vector<double> frequencies, double pi_min) {
    if (!(pi_min > 0.0 && pi_min < 1.0)) throw ConfigError(kModule, "pi_min must lie in (0, 1)");
    if (frequencies.size() < 2) throw NumericError(kModule, "threshold choice needs at least two variables");
    std::sort(frequencies.begin(), frequencies.end(), std::greater<>());

    // 0-based: gap k sits between positions k and k + 1.
    bool any = false;
    std::size_t best = 0;
    double best_gap = -1.0;
    for (std::size_t k = 0; k + 1 < frequencies.size(); ++k) {
        if (!(frequencies[k + 1] > pi_min)) continue;
        const double gap = frequencies[k] - frequencies[k + 1];
        if (!any || gap >= best_gap) {
            best = k;
            best_gap = gap;
            any = true;
        }
    }
    if (!any) return pi_min;
    return frequencies[best + 1];
}

std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> sa = a, sb = b, out;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
    return out;
}

SelectionResult double_select(const StabilityProfile& profile, double pi1, double pi2) {
    if (profile.freq_outcome.size() != profile.freq_treatment.size())
        throw SchemaError(kModule, "frequency vectors differ in length");
    SelectionResult out;
    out.pi1 = pi1;
    out.pi2 = pi2;
    out.pi1_min = pi1;
    out.pi2_min = pi2;
    for (std::size_t j = 0; j < profile.freq_outcome.size(); ++j) {
        if (profile.freq_outcome[j] > pi1) out.S_y.push_back(static_cast<int>(j));
        if (profile.freq_treatment[j] > pi2) out.S_d.push_back(static_cast<int>(j));
    }
    out.S = sorted_union(out.S_y, out.S_d);
    return out;
}

SelectionResult gap_double_select(const StabilityProfile& profile, double pi1_min, double pi2_min) {
    const double pi1 = choose_threshold(profile.freq_outcome, pi1_min);
    const double pi2 = choose_threshold(profile.freq_treatment, pi2_min);
    SelectionResult out = double_select(profile, pi1, pi2);
    out.pi1_min = pi1_min;
    out.pi2_min = pi2_min;
    return out;
}

SelectionResult plain_double_select(const DemeanedPanel& panel, const lasso::CvConfig& cv, Engine& rng) {
    panel.validate();
    const auto units = panel.unit_of_rows();
    const auto fy = lasso::cv_select_lambda(panel.X, panel.y, units, cv, rng);
    const auto fd = lasso::cv_select_lambda(panel.X, panel.d, units, cv, rng);
    SelectionResult out;
    out.S_y = fy.fit.active_set;
    out.S_d = fd.fit.active_set;
    out.S = sorted_union(out.S_y, out.S_d);
    out.pi1 = out.pi2 = out.pi1_min = out.pi2_min = 0.0;
    return out;
}

std::vector<int> plain_structural_select(const DemeanedPanel& panel, const lasso::CvConfig& cv, Engine& rng) {
    panel.validate();
    const auto fit = lasso::cv_select_lambda(structural_design(panel.d, panel.X), panel.y, panel.unit_of_rows(), cv, rng);
    std::vector<int> out;
    for (int j : fit.fit.active_set)
        if (j > 0) out.push_back(j - 1);
    return out;
}

std::vector<int> above(const std::vector<double>& frequencies, double pi) {
    std::vector<int> out;
    for (std::size_t j = 0; j < frequencies.size(); ++j)
        if (frequencies[j] > pi) out.push_back(static_cast<int>(j));
    return out;
}

double outcome_floor(FloorPreset preset, double theta) {
    switch (preset) {
        case FloorPreset::all: return theta <= 0.992 ? 0.945 : 0.975;
        case FloorPreset::fees: return 0.98;
        case FloorPreset::small: return 0.9;
    }
    return 0.9;
}

double treatment_floor(FloorPreset preset) { return preset == FloorPreset::small ? 0.93 : 0.9; }

FloorPreset parse_floor_preset(const std::string& name) {
    if (name == "all") return FloorPreset::all;
    if (name == "fees") return FloorPreset::fees;
    if (name == "small") return FloorPreset::small;
    throw ConfigError(kModule, "unknown floor preset '" + name + "' (valid: all, fees, small)");
}

std::string profile_csv(const StabilityProfile& profile) {
    std::ostringstream out;
    out << "variable,freq_outcome,freq_treatment\n";
    for (std::size_t j = 0; j < profile.freq_outcome.size(); ++j) {
        const std::string name = j < profile.variables.size() ? profile.variables[j] : "x" + std::to_string(j + 1);
        out << name << ',' << format_double(profile.freq_outcome[j]) << ','
            << format_double(profile.freq_treatment[j]) << '\n';
    }
    return out.str();
}

std::string thresholds_json(const StabilityProfile& profile, const SelectionResult& result) {
    auto names = [&](const std::vector<int>& idx) {
        std::vector<std::string> out;
        for (int j : idx)
            out.push_back(static_cast<std::size_t>(j) < profile.variables.size() ? profile.variables[j]
                                                                                 : "x" + std::to_string(j + 1));
        return out;
    };
    nlohmann::ordered_json j;
    j["subsamples"] = profile.subsamples;
    j["subsample_size"] = profile.subsample_size;
    j["seed"] = profile.seed;
    j["pi1"] = result.pi1;
    j["pi2"] = result.pi2;
    j["pi1_min"] = result.pi1_min;
    j["pi2_min"] = result.pi2_min;
    j["selected_outcome"] = names(result.S_y);
    j["selected_treatment"] = names(result.S_d);
    j["selected"] = names(result.S);
    return j.dump(2) + "\n";
}

}  // namespace stabds::selection
