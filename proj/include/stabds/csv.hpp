#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "stabds/panel_data.hpp"

namespace stabds::csv {

/// Parsed comma-separated table. Cells keep their text; numeric access goes
/// through `number`, which reports row/column coordinates on failure.
struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> lines;  // 1-based file line of each row

    /// Column position, or -1.
    int find(const std::string& name) const;
    /// Column position; SchemaError naming the column when absent.
    int require(const std::string& name) const;
    double number(std::size_t row, int column) const;
    bool empty_cell(std::size_t row, int column) const;
    /// "file:line, column 'name'" for messages.
    std::string where(std::size_t row, int column) const;
};

CsvTable parse(std::string_view text, std::string source);
CsvTable read_file(const std::string& path);

/// Column roles for a long-format panel file `unit,time,<columns>...`.
struct PanelSchema {
    std::string response = "y";
    std::string treatment = "d";
    /// Covariates; empty means every column other than unit, time,
    /// response and treatment, in file order.
    std::vector<std::string> controls;
    /// When false a missing response column leaves y at zero.
    bool require_response = true;
    bool binary_treatment = true;
};

/// Units keep their order of first appearance; periods are sorted
/// numerically when every label is a number.
PanelDataset panel_from_table(const CsvTable& table, const PanelSchema& schema);

std::string panel_to_csv(const PanelDataset& panel, const std::string& response = "y",
                         const std::string& treatment = "d");

/// States file `unit,time,HG,NE_int[,NO]`: rows with an empty NE_int cell
/// are pre-sample graduate counts (at most two periods before the first
/// full period). Flows file `origin,destination,time,NE_from` with optional
/// `NE_lag0,NE_lag1,NE_lag2`; absent pairs count as zero.
EnrollmentComponents components_from_tables(const CsvTable& states, const CsvTable& flows);

/// `unit,time,fee` with fee in {0,1}; labels must match the components.
BoolMatrix fees_from_table(const CsvTable& table, const std::vector<std::string>& units,
                           const std::vector<std::string>& times);

/// Edge list `unit_a,unit_b`; the result is symmetric.
BoolMatrix adjacency_from_table(const CsvTable& table, const std::vector<std::string>& units);

/// `unit,time,theta,y`, one block per theta.
std::string response_grid_csv(const ResponseGrid& grid, const std::vector<std::string>& units,
                              const std::vector<std::string>& times);

/// `unit,time,y` for a single response vector.
std::string response_csv(const Eigen::VectorXd& y, const std::vector<std::string>& units,
                         const std::vector<std::string>& times);

/// Writes text to a file; ConfigError when the file cannot be opened.
void write_file(const std::string& path, const std::string& text);

}  // namespace stabds::csv
