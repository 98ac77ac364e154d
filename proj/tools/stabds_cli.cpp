// stabds: stability double selection estimates, simulations, response
// construction and influence diagnostics for fixed-effects panels.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stabds/csv.hpp"
#include "stabds/errors.hpp"
#include "stabds/format.hpp"
#include "stabds/inference.hpp"
#include "stabds/manifest.hpp"
#include "stabds/panel_data.hpp"
#include "stabds/pipeline.hpp"
#include "stabds/selection.hpp"
#include "stabds/simulation.hpp"

using namespace stabds;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kOther = 1, kSchema = 2, kNumeric = 3, kConfig = 4 };

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("cli", std::string("bad number in ") + what + ": '" + item + "'");
        }
    }
    return out;
}

void emit(const std::string& path, const std::string& text, RunManifest& manifest) {
    csv::write_file(path, text);
    manifest.add_output(path, text);
}

// ---- shared panel options -------------------------------------------------

struct PanelOptions {
    std::string panel;
    std::string response = "y";
    std::string treatment = "d";
    std::string controls;
    std::string states, flows, fees, adjacency;
    bool pp = false;

    void add(CLI::App* app, bool response_optional) {
        app->add_option("--panel", panel, "Long-format panel CSV (unit,time,...)")->required();
        app->add_option("--response", response, "Response column")->capture_default_str();
        app->add_option("--treatment", treatment, "Binary treatment column")->capture_default_str();
        app->add_option("--controls", controls, "Comma-separated covariates (default: all other columns)");
        app->add_option("--fees", fees, "Fee indicators unit,time,fee; adds spatial migration controls");
        app->add_option("--adjacency", adjacency, "Neighbour edge list unit_a,unit_b (with --fees)");
        app->add_flag("--pp", pp, "Scale the response by 100 (percentage points)");
        if (response_optional) {
            app->add_option("--states", states, "Enrollment states file unit,time,HG,NE_int[,NO]");
            app->add_option("--flows", flows, "Enrollment flows file origin,destination,time,NE_from[,NE_lag0..2]");
        }
    }

    bool uses_components() const { return !states.empty() || !flows.empty(); }

    PanelDataset load(RunManifest& manifest, bool response_from_components) const {
        csv::PanelSchema schema;
        schema.response = response;
        schema.treatment = treatment;
        schema.controls = split_list(controls);
        schema.require_response = !response_from_components;
        manifest.add_input(panel);
        return csv::panel_from_table(csv::read_file(panel), schema);
    }

    EnrollmentComponents components(RunManifest& manifest) const {
        if (states.empty() || flows.empty()) throw ConfigError("cli", "--states and --flows must be given together");
        manifest.add_input(states);
        manifest.add_input(flows);
        return csv::components_from_tables(csv::read_file(states), csv::read_file(flows));
    }

    void add_spatial(PanelDataset& panel, const EnrollmentComponents* comp, RunManifest& manifest) const {
        if (fees.empty() && adjacency.empty()) return;
        if (fees.empty() || adjacency.empty()) throw ConfigError("cli", "--fees and --adjacency must be given together");
        if (!comp) throw ConfigError("cli", "spatial controls need --states and --flows");
        manifest.add_input(fees);
        manifest.add_input(adjacency);
        const auto fee = csv::fees_from_table(csv::read_file(fees), comp->unit_labels, comp->time_labels);
        const auto adj = csv::adjacency_from_table(csv::read_file(adjacency), comp->unit_labels);
        const auto sc = compute_spatial_controls(*comp, fee, adj);
        const auto p = panel.X.cols();
        panel.X.conservativeResize(Eigen::NoChange, p + 4);
        panel.X.rightCols(4) = sc.values;
        for (const char* name : SpatialControls::names) panel.column_names.emplace_back(name);
    }
};

void check_alignment(const PanelDataset& panel, const EnrollmentComponents& c) {
    if (panel.unit_labels != c.unit_labels || panel.time_labels != c.time_labels)
        throw SchemaError("panel_data", "panel and components disagree on unit or period labels (order matters)");
}

// ---- estimate ---------------------------------------------------------------

struct EstimateOptions {
    PanelOptions panel;
    std::optional<double> theta;
    std::string theta_grid;
    bool extra = false;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    int subsamples = 1000;
    int subsample_size = 0;
    int folds = 10;
    std::string stability_cv_rule = "one_se";
    std::string mode = "gap";
    double pi1 = 0.9;
    double pi2 = 0.9;
    std::string floor_preset;
    std::string se = "design";
    double level = 0.95;
    std::string out = "estimate.json";
    std::string selection_out = "selection.csv";
    std::string table_out;
};

json estimate_config_json(const EstimateOptions& o) {
    json j;
    j["panel"] = o.panel.panel;
    j["response"] = o.panel.response;
    j["treatment"] = o.panel.treatment;
    j["controls"] = o.panel.controls;
    j["pp"] = o.panel.pp;
    if (o.theta) j["theta"] = *o.theta;
    if (!o.theta_grid.empty()) j["theta_grid"] = o.theta_grid;
    j["extra"] = o.extra;
    j["subsamples"] = o.subsamples;
    j["subsample_size"] = o.subsample_size;
    j["folds"] = o.folds;
    j["stability_cv_rule"] = o.stability_cv_rule;
    j["threshold_mode"] = o.mode;
    j["pi1"] = o.pi1;
    j["pi2"] = o.pi2;
    j["floor_preset"] = o.floor_preset;
    j["se"] = o.se;
    j["level"] = o.level;
    j["threads"] = o.threads;
    return j;
}

int run_estimate_cmd(const EstimateOptions& o) {
    if (!o.seed) throw ConfigError("cli", "--seed is required");
    const int modes = (o.theta ? 1 : 0) + (o.theta_grid.empty() ? 0 : 1) + (o.extra ? 1 : 0);
    if (modes > 1) throw ConfigError("cli", "--theta, --theta-grid and --extra are mutually exclusive");
    if (modes == 1 && !o.panel.uses_components()) throw ConfigError("cli", "response construction needs --states and --flows");

    RunManifest manifest;
    manifest.command = "estimate";
    manifest.config = estimate_config_json(o);
    manifest.seed = *o.seed;
    manifest.has_seed = true;

    PanelDataset panel = o.panel.load(manifest, modes == 1);
    std::optional<EnrollmentComponents> comp;
    if (o.panel.uses_components()) {
        comp = o.panel.components(manifest);
        check_alignment(panel, *comp);
    }
    o.panel.add_spatial(panel, comp ? &*comp : nullptr, manifest);

    pipeline::EstimateConfig cfg;
    cfg.stability.subsamples = o.subsamples;
    cfg.stability.subsample_size = o.subsample_size;
    cfg.stability.cv.folds = o.folds;
    cfg.stability.cv.rule = lasso::parse_cv_rule(o.stability_cv_rule);
    cfg.stability.seed = *o.seed;
    cfg.stability.threads = o.threads;
    if (o.mode == "gap") cfg.mode = pipeline::ThresholdMode::gap;
    else if (o.mode == "fixed") cfg.mode = pipeline::ThresholdMode::fixed;
    else throw ConfigError("cli", "--threshold-mode must be 'gap' or 'fixed'");
    cfg.se = inference::parse_se_kind(o.se);
    cfg.level = o.level;
    const auto preset = o.floor_preset.empty() ? std::nullopt
                                               : std::optional(selection::parse_floor_preset(o.floor_preset));

    const double scale = o.panel.pp ? 100.0 : 1.0;
    auto run_at = [&](const Eigen::VectorXd* y, double theta) {
        PanelDataset p = panel;
        if (y) p.y = *y;
        p.y *= scale;
        pipeline::EstimateConfig c = cfg;
        c.pi1 = preset ? selection::outcome_floor(*preset, std::isnan(theta) ? 1.0 : theta) : o.pi1;
        c.pi2 = preset ? selection::treatment_floor(*preset) : o.pi2;
        return pipeline::run_estimate(p, c);
    };

    std::vector<double> thetas;
    if (o.theta) thetas = {*o.theta};
    if (!o.theta_grid.empty()) thetas = parse_theta_grid(o.theta_grid);

    json out;
    std::string selection_text;
    std::ostringstream table;
    table << "theta,beta0,se_design,se_hc3,df,t,p,ci_lo,ci_hi,n_selected,all_controls_beta0,all_controls_se_design,"
             "all_controls_se_hc3\n";
    auto table_row = [&](double theta, const pipeline::EstimateRun& r) {
        const auto& e = r.estimate;
        table << (std::isnan(theta) ? std::string() : format_double(theta)) << ',' << format_double(e.beta0) << ','
              << format_double(e.se_design) << ',' << format_double(e.se_hc3) << ',' << e.df << ','
              << format_double(e.t_stat) << ',' << format_double(e.p_value) << ',' << format_double(e.ci.first) << ','
              << format_double(e.ci.second) << ',' << e.selected.size();
        if (r.all_controls)
            table << ',' << format_double(r.all_controls->beta0) << ',' << format_double(r.all_controls->se_design)
                  << ',' << format_double(r.all_controls->se_hc3);
        else
            table << ",,,";
        table << '\n';
    };

    if (thetas.size() > 1) {
        json rows = json::array();
        std::ostringstream sel;
        sel << "theta,variable,freq_outcome,freq_treatment\n";
        const auto grid = build_response_grid(*comp, thetas);
        for (std::size_t k = 0; k < thetas.size(); ++k) {
            const Eigen::VectorXd y = grid.y_grid.col(static_cast<Eigen::Index>(k));
            const auto run = run_at(&y, thetas[k]);
            json row;
            row["theta"] = thetas[k];
            row["admissible"] = static_cast<bool>(grid.admissible[k]);
            row["mean_response"] = grid.mean_by_theta[k];
            const json block = pipeline::estimate_json(run, panel.column_names);
            for (auto& [key, value] : block.items()) row[key] = value;
            rows.push_back(row);
            table_row(thetas[k], run);
            const auto& prof = run.profile;
            for (std::size_t j = 0; j < prof.freq_outcome.size(); ++j)
                sel << format_double(thetas[k]) << ',' << panel.column_names[j] << ','
                    << format_double(prof.freq_outcome[j]) << ',' << format_double(prof.freq_treatment[j]) << '\n';
        }
        out["grid"] = rows;
        selection_text = sel.str();
    } else {
        std::optional<Eigen::VectorXd> y;
        double theta = std::numeric_limits<double>::quiet_NaN();
        if (thetas.size() == 1) {
            theta = thetas[0];
            y = build_response(*comp, theta);
        } else if (o.extra) {
            y = build_response_extra(*comp);
        }
        const auto run = run_at(y ? &*y : nullptr, theta);
        out = pipeline::estimate_json(run, panel.column_names);
        if (!std::isnan(theta)) out["theta"] = theta;
        table_row(theta, run);
        selection_text = selection::profile_csv(run.profile);
    }

    emit(o.out, out.dump(2) + "\n", manifest);
    emit(o.selection_out, selection_text, manifest);
    if (!o.table_out.empty()) emit(o.table_out, table.str(), manifest);
    write_manifest(manifest, o.out);
    if (thetas.size() <= 1) {
        std::cout << "beta0 = " << format_double(out["beta0"].get<double>()) << " (design SE "
                  << format_double(out["se_design"].get<double>()) << ", HC3 SE " << format_double(out["se_hc3"].get<double>())
                  << ")\n";
    } else {
        std::cout << "wrote " << thetas.size() << " grid estimates to " << o.out << "\n";
    }
    return kOk;
}

// ---- simulate -------------------------------------------------------------

struct SimulateOptions {
    std::string config;
    std::optional<int> replications;
    std::optional<int> subsamples;
    std::string inf;
    std::string target;
    std::string se;
    std::string methods;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out = "report.csv";
    std::string json_out;
};

int run_simulate_cmd(const SimulateOptions& o) {
    if (!o.seed) throw ConfigError("cli", "--seed is required for simulate");
    RunManifest manifest;
    manifest.command = "simulate";

    sim::SimConfig base;
    if (!o.config.empty()) {
        manifest.add_input(o.config);
        std::ifstream in(o.config);
        if (!in) throw ConfigError("cli", "cannot open '" + o.config + "'");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("cli", o.config + ": " + e.what());
        }
        base = sim::sim_config_from_json(j, base);
    }
    base.seed = *o.seed;
    if (o.replications) base.replications = *o.replications;
    if (o.subsamples) base.subsamples = *o.subsamples;
    if (o.threads) base.threads = *o.threads;
    if (!o.se.empty()) base.se_kind = inference::parse_se_kind(o.se);
    if (!o.methods.empty()) {
        base.methods.clear();
        for (const auto& name : split_list(o.methods)) base.methods.push_back(sim::parse_method(name));
    }
    std::vector<double> infs = o.inf.empty() ? std::vector<double>{base.inf} : parse_doubles(o.inf, "--inf");
    std::vector<sim::DistortionTarget> targets;
    if (o.target.empty()) targets.push_back(base.target);
    for (const auto& t : split_list(o.target)) targets.push_back(sim::parse_target(t));

    json cfg = sim::to_json(base);
    cfg["threads"] = base.threads;
    cfg["inf_values"] = infs;
    std::vector<std::string> target_names;
    for (auto t : targets) target_names.push_back(sim::target_name(t));
    cfg["targets"] = target_names;
    manifest.config = cfg;
    manifest.seed = base.seed;
    manifest.has_seed = true;

    std::vector<sim::SimulationReport> reports;
    for (auto target : targets) {
        for (double inf : infs) {
            sim::SimConfig c = base;
            c.target = target;
            c.inf = inf;
            std::cerr << "simulating target=" << sim::target_name(target) << " inf=" << format_double(inf) << " ("
                      << c.replications << " replications)\n";
            reports.push_back(sim::run_study(c));
        }
    }
    emit(o.out, sim::report_csv(reports), manifest);
    if (!o.json_out.empty()) emit(o.json_out, sim::report_json(reports), manifest);
    write_manifest(manifest, o.out);
    return kOk;
}

// ---- construct-response ---------------------------------------------------

struct ResponseOptions {
    std::string states, flows;
    std::optional<double> theta;
    std::string theta_grid;
    bool extra = false;
    bool theta_star = false;
    std::string criterion = "msd";
    std::string out = "response.csv";
};

int run_response_cmd(const ResponseOptions& o) {
    const int modes = (o.theta ? 1 : 0) + (o.theta_grid.empty() ? 0 : 1) + (o.extra ? 1 : 0) + (o.theta_star ? 1 : 0);
    if (modes != 1) throw ConfigError("cli", "choose exactly one of --theta, --theta-grid, --extra, --theta-star");
    RunManifest manifest;
    manifest.command = "construct-response";
    json cfg;
    if (o.theta) cfg["theta"] = *o.theta;
    if (!o.theta_grid.empty()) cfg["theta_grid"] = o.theta_grid;
    cfg["extra"] = o.extra;
    cfg["theta_star"] = o.theta_star;
    cfg["criterion"] = o.criterion;
    manifest.config = cfg;
    manifest.add_input(o.states);
    manifest.add_input(o.flows);
    const auto comp = csv::components_from_tables(csv::read_file(o.states), csv::read_file(o.flows));

    if (o.theta) {
        emit(o.out, csv::response_csv(build_response(comp, *o.theta), comp.unit_labels, comp.time_labels), manifest);
    } else if (o.extra) {
        emit(o.out, csv::response_csv(build_response_extra(comp), comp.unit_labels, comp.time_labels), manifest);
    } else if (!o.theta_grid.empty()) {
        const auto grid = build_response_grid(comp, parse_theta_grid(o.theta_grid));
        emit(o.out, csv::response_grid_csv(grid, comp.unit_labels, comp.time_labels), manifest);
    } else {
        DeviationCriterion crit;
        if (o.criterion == "msd") crit = DeviationCriterion::msd;
        else if (o.criterion == "mad") crit = DeviationCriterion::mad;
        else throw ConfigError("cli", "--criterion must be 'msd' or 'mad'");
        const auto grid = o.theta_grid.empty() ? theta_grid() : parse_theta_grid(o.theta_grid);
        const auto star = theta_star(comp, grid, crit);
        json j;
        j["criterion"] = o.criterion;
        j["theta_star"] = star.theta;
        j["deviation"] = star.deviation;
        j["grid"] = star.grid;
        j["deviations"] = star.deviations;
        emit(o.out, j.dump(2) + "\n", manifest);
        std::cout << format_double(star.theta) << "\n";
    }
    write_manifest(manifest, o.out);
    return kOk;
}

// ---- spatial-controls -------------------------------------------------------

struct SpatialOptions {
    std::string states, flows, fees, adjacency;
    std::string out = "spatial.csv";
};

int run_spatial_cmd(const SpatialOptions& o) {
    RunManifest manifest;
    manifest.command = "spatial-controls";
    manifest.config = json::object();
    for (const auto* path : {&o.states, &o.flows, &o.fees, &o.adjacency}) manifest.add_input(*path);
    const auto comp = csv::components_from_tables(csv::read_file(o.states), csv::read_file(o.flows));
    const auto fee = csv::fees_from_table(csv::read_file(o.fees), comp.unit_labels, comp.time_labels);
    const auto adj = csv::adjacency_from_table(csv::read_file(o.adjacency), comp.unit_labels);
    const auto sc = compute_spatial_controls(comp, fee, adj);
    std::ostringstream text;
    text << "unit,time";
    for (const char* name : SpatialControls::names) text << ',' << name;
    text << '\n';
    for (int i = 0; i < comp.n; ++i) {
        for (int t = 0; t < comp.T; ++t) {
            const auto r = static_cast<Eigen::Index>(i) * comp.T + t;
            text << comp.unit_labels[static_cast<std::size_t>(i)] << ',' << comp.time_labels[static_cast<std::size_t>(t)];
            for (int k = 0; k < 4; ++k) text << ',' << format_double(sc.values(r, k));
            text << '\n';
        }
    }
    emit(o.out, text.str(), manifest);
    write_manifest(manifest, o.out);
    return kOk;
}

// ---- diagnose ---------------------------------------------------------------

struct DiagnoseOptions {
    PanelOptions panel;
    std::optional<double> theta;
    std::string out_prefix = "influence";
};

int run_diagnose_cmd(const DiagnoseOptions& o) {
    RunManifest manifest;
    manifest.command = "diagnose";
    json cfg;
    cfg["panel"] = o.panel.panel;
    cfg["response"] = o.panel.response;
    cfg["treatment"] = o.panel.treatment;
    cfg["controls"] = o.panel.controls;
    cfg["pp"] = o.panel.pp;
    if (o.theta) cfg["theta"] = *o.theta;
    manifest.config = cfg;

    if (o.theta && !o.panel.uses_components()) throw ConfigError("cli", "--theta needs --states and --flows");
    PanelDataset panel = o.panel.load(manifest, o.theta.has_value());
    std::optional<EnrollmentComponents> comp;
    if (o.panel.uses_components()) {
        comp = o.panel.components(manifest);
        check_alignment(panel, *comp);
        if (o.theta) panel.y = build_response(*comp, *o.theta);
    }
    o.panel.add_spatial(panel, comp ? &*comp : nullptr, manifest);
    if (o.panel.pp) panel.y *= 100.0;

    const auto report = inference::influence_diagnostics(within_transform(panel));
    const auto N = report.dffits.size();
    std::ostringstream dffits, dfbetas, xi;
    dffits << "row,unit,time,dffits,influential\n";
    for (Eigen::Index r = 0; r < N; ++r) {
        const auto i = static_cast<std::size_t>(r / panel.T);
        const auto t = static_cast<std::size_t>(r % panel.T);
        dffits << r << ',' << panel.unit_labels[i] << ',' << panel.time_labels[t] << ','
               << format_double(report.dffits(r)) << ',' << (report.influential_rows[static_cast<std::size_t>(r)] ? 1 : 0)
               << '\n';
    }
    dfbetas << "variable,row,dfbetas\n";
    xi << "variable,xi\n";
    for (std::size_t g = 0; g < report.variables.size(); ++g) {
        for (Eigen::Index r = 0; r < N; ++r)
            dfbetas << report.variables[g] << ',' << r << ','
                    << format_double(report.dfbetas(static_cast<Eigen::Index>(g), r)) << '\n';
        xi << report.variables[g] << ',' << report.xi[g] << '\n';
    }
    json thresholds;
    thresholds["observations"] = N;
    thresholds["parameters"] = report.variables.size();
    thresholds["threshold_dffits"] = report.threshold_dffits;
    thresholds["threshold_dfbetas"] = report.threshold_dfbetas;
    int flagged = 0;
    for (bool b : report.influential_rows) flagged += b;
    thresholds["influential_rows"] = flagged;

    emit(o.out_prefix + "_dffits.csv", dffits.str(), manifest);
    emit(o.out_prefix + "_dfbetas.csv", dfbetas.str(), manifest);
    emit(o.out_prefix + "_xi.csv", xi.str(), manifest);
    emit(o.out_prefix + "_thresholds.json", thresholds.dump(2) + "\n", manifest);
    write_manifest(manifest, o.out_prefix + "_dffits.csv");
    std::cout << flagged << " of " << N << " rows exceed the DFFITS threshold "
              << format_double(report.threshold_dffits) << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stability double selection for fixed-effects panels"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    EstimateOptions est;
    auto* cmd_est = app.add_subcommand("estimate", "Estimate the treatment effect by stability double selection");
    est.panel.add(cmd_est, true);
    cmd_est->add_option("--theta", est.theta, "Build the response at this theta from the components");
    cmd_est->add_option("--theta-grid", est.theta_grid, "lo:hi:step; one estimate per theta");
    cmd_est->add_flag("--extra", est.extra, "Use the cohort-refined response");
    cmd_est->add_option("--seed", est.seed, "Root seed for subsampling and folds");
    cmd_est->add_option("--threads", est.threads)->capture_default_str()->check(CLI::PositiveNumber);
    cmd_est->add_option("--subsamples", est.subsamples, "Subsample count C")->capture_default_str();
    cmd_est->add_option("--subsample-size", est.subsample_size, "Rows per subsample (default nT/2)");
    cmd_est->add_option("--folds", est.folds)->capture_default_str();
    cmd_est->add_option("--stability-cv-rule", est.stability_cv_rule, "min or one_se")->capture_default_str();
    cmd_est->add_option("--threshold-mode", est.mode, "gap or fixed")->capture_default_str();
    cmd_est->add_option("--pi1", est.pi1, "Outcome floor (gap) or threshold (fixed)")->capture_default_str();
    cmd_est->add_option("--pi2", est.pi2, "Treatment floor (gap) or threshold (fixed)")->capture_default_str();
    cmd_est->add_option("--floor-preset", est.floor_preset, "all, fees or small; overrides --pi1/--pi2");
    cmd_est->add_option("--se", est.se, "design or hc3 for the reported test")->capture_default_str();
    cmd_est->add_option("--level", est.level, "Confidence level")->capture_default_str();
    cmd_est->add_option("--out", est.out)->capture_default_str();
    cmd_est->add_option("--selection-out", est.selection_out)->capture_default_str();
    cmd_est->add_option("--table-out", est.table_out, "Optional CSV with one row per estimate");

    SimulateOptions simo;
    auto* cmd_sim = app.add_subcommand("simulate", "Run the Monte Carlo study");
    cmd_sim->add_option("--config", simo.config, "JSON config (see configs/)");
    cmd_sim->add_option("--replications", simo.replications);
    cmd_sim->add_option("--subsamples", simo.subsamples);
    cmd_sim->add_option("--inf", simo.inf, "Comma-separated distortion sizes");
    cmd_sim->add_option("--target", simo.target, "Comma-separated: none, active, inactive, response");
    cmd_sim->add_option("--se", simo.se, "design or hc3");
    cmd_sim->add_option("--methods", simo.methods, "Comma-separated method names");
    cmd_sim->add_option("--seed", simo.seed);
    cmd_sim->add_option("--threads", simo.threads)->check(CLI::PositiveNumber);
    cmd_sim->add_option("--out", simo.out)->capture_default_str();
    cmd_sim->add_option("--json", simo.json_out, "JSON report with Monte Carlo standard errors");

    ResponseOptions reso;
    auto* cmd_res = app.add_subcommand("construct-response", "Build enrollment-rate responses");
    cmd_res->add_option("--states", reso.states)->required();
    cmd_res->add_option("--flows", reso.flows)->required();
    cmd_res->add_option("--theta", reso.theta);
    cmd_res->add_option("--theta-grid", reso.theta_grid, "lo:hi:step (also the search grid for --theta-star)");
    cmd_res->add_flag("--extra", reso.extra);
    cmd_res->add_flag("--theta-star", reso.theta_star);
    cmd_res->add_option("--criterion", reso.criterion, "msd or mad")->capture_default_str();
    cmd_res->add_option("--out", reso.out)->capture_default_str();

    SpatialOptions spo;
    auto* cmd_sp = app.add_subcommand("spatial-controls", "Net migration controls by fee status");
    cmd_sp->add_option("--states", spo.states)->required();
    cmd_sp->add_option("--flows", spo.flows)->required();
    cmd_sp->add_option("--fees", spo.fees)->required();
    cmd_sp->add_option("--adjacency", spo.adjacency)->required();
    cmd_sp->add_option("--out", spo.out)->capture_default_str();

    DiagnoseOptions dgo;
    auto* cmd_dg = app.add_subcommand("diagnose", "DFFITS and DFBETAS of the fixed-effects regression");
    dgo.panel.add(cmd_dg, true);
    cmd_dg->add_option("--theta", dgo.theta, "Build the response at this theta from the components");
    cmd_dg->add_option("--out-prefix", dgo.out_prefix)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*cmd_est) return run_estimate_cmd(est);
        if (*cmd_sim) return run_simulate_cmd(simo);
        if (*cmd_res) return run_response_cmd(reso);
        if (*cmd_sp) return run_spatial_cmd(spo);
        if (*cmd_dg) return run_diagnose_cmd(dgo);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::schema: return kSchema;
            case ErrorKind::numeric: return kNumeric;
            case ErrorKind::config: return kConfig;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
    return kOther;
}
