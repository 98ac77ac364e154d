#include "stabds/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "stabds/errors.hpp"
#include "stabds/format.hpp"

namespace stabds::csv {

namespace {

constexpr const char* kModule = "panel_data";

std::vector<std::string> split_line(std::string_view line, const std::string& source, int lineno) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cell += '"';
                ++k;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cell += ch;
            }
        } else if (ch == '"' && cell.find_first_not_of(" \t") == std::string::npos) {
            cell.clear();
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += ch;
        }
    }
    if (quoted) throw SchemaError(kModule, source + ":" + std::to_string(lineno) + ": unterminated quote");
    cells.push_back(std::move(cell));
    for (auto& c : cells) {
        const auto b = c.find_first_not_of(" \t");
        const auto e = c.find_last_not_of(" \t");
        c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
    }
    return cells;
}

bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    const char* first = text.data();
    const char* last = first + text.size();
    if (*first == '+') ++first;
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

// Period labels sorted numerically when they all parse, else kept in order.
std::vector<std::string> order_periods(std::vector<std::string> labels) {
    std::vector<std::pair<double, std::string>> keyed;
    for (const auto& l : labels) {
        double v;
        if (!parse_double(l, v)) return labels;
        keyed.emplace_back(v, l);
    }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    labels.clear();
    for (auto& k : keyed) labels.push_back(k.second);
    return labels;
}

std::map<std::string, int> index_of(const std::vector<std::string>& labels) {
    std::map<std::string, int> m;
    for (std::size_t k = 0; k < labels.size(); ++k) m[labels[k]] = static_cast<int>(k);
    return m;
}

int lookup(const std::map<std::string, int>& m, const std::string& label, const CsvTable& table, std::size_t row,
           int column) {
    const auto it = m.find(label);
    if (it == m.end())
        throw SchemaError(kModule, table.where(row, column) + ": unknown label '" + label + "'");
    return it->second;
}

std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

}  // namespace

int CsvTable::find(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
        if (header[k] == name) return static_cast<int>(k);
    return -1;
}

int CsvTable::require(const std::string& name) const {
    const int k = find(name);
    if (k < 0) throw SchemaError(kModule, source + ": missing required column '" + name + "'");
    return k;
}

std::string CsvTable::where(std::size_t row, int column) const {
    std::ostringstream s;
    s << source << ":" << lines[row] << ", column '" << header[static_cast<std::size_t>(column)] << "'";
    return s.str();
}

bool CsvTable::empty_cell(std::size_t row, int column) const {
    return rows[row][static_cast<std::size_t>(column)].empty();
}

double CsvTable::number(std::size_t row, int column) const {
    const auto& text = rows[row][static_cast<std::size_t>(column)];
    double v;
    if (!parse_double(text, v)) throw SchemaError(kModule, where(row, column) + ": not a number: '" + text + "'");
    if (!std::isfinite(v)) throw SchemaError(kModule, where(row, column) + ": non-finite value");
    return v;
}

CsvTable parse(std::string_view text, std::string source) {
    CsvTable table;
    table.source = std::move(source);
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (end == text.size()) break;
            continue;
        }
        auto cells = split_line(line, table.source, lineno);
        if (table.header.empty()) {
            table.header = std::move(cells);
            for (std::size_t k = 0; k < table.header.size(); ++k) {
                if (table.header[k].empty())
                    throw SchemaError(kModule, table.source + ":" + std::to_string(lineno) + ": empty column name");
                for (std::size_t m = 0; m < k; ++m)
                    if (table.header[m] == table.header[k])
                        throw SchemaError(kModule, table.source + ": duplicate column '" + table.header[k] + "'");
            }
        } else {
            if (cells.size() != table.header.size()) {
                std::ostringstream msg;
                msg << table.source << ":" << lineno << ": expected " << table.header.size() << " fields, got "
                    << cells.size();
                throw SchemaError(kModule, msg.str());
            }
            table.rows.push_back(std::move(cells));
            table.lines.push_back(lineno);
        }
        if (end == text.size()) break;
    }
    if (table.header.empty()) throw SchemaError(kModule, table.source + ": empty file");
    return table;
}

CsvTable read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cli", "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cli", "cannot write '" + path + "'");
    out << text;
    if (!out) throw ConfigError("cli", "write failed for '" + path + "'");
}

PanelDataset panel_from_table(const CsvTable& table, const PanelSchema& schema) {
    const int cu = table.require("unit");
    const int ct = table.require("time");
    const int cy = schema.require_response ? table.require(schema.response) : table.find(schema.response);
    const int cd = table.require(schema.treatment);

    std::vector<int> cx;
    std::vector<std::string> names;
    if (schema.controls.empty()) {
        for (std::size_t k = 0; k < table.header.size(); ++k) {
            const auto& h = table.header[k];
            if (h == "unit" || h == "time" || h == schema.response || h == schema.treatment) continue;
            cx.push_back(static_cast<int>(k));
            names.push_back(h);
        }
    } else {
        for (const auto& name : schema.controls) {
            cx.push_back(table.require(name));
            names.push_back(name);
        }
    }

    std::vector<std::string> units, times;
    {
        std::map<std::string, int> seen_u, seen_t;
        for (const auto& row : table.rows) {
            if (seen_u.emplace(row[static_cast<std::size_t>(cu)], 0).second) units.push_back(row[static_cast<std::size_t>(cu)]);
            if (seen_t.emplace(row[static_cast<std::size_t>(ct)], 0).second) times.push_back(row[static_cast<std::size_t>(ct)]);
        }
    }
    times = order_periods(times);
    const auto uidx = index_of(units);
    const auto tidx = index_of(times);

    PanelDataset panel;
    panel.n = static_cast<int>(units.size());
    panel.T = static_cast<int>(times.size());
    if (panel.n == 0) throw SchemaError(kModule, table.source + ": no data rows");
    const auto N = panel.rows();
    if (static_cast<Eigen::Index>(table.rows.size()) != N) {
        std::ostringstream msg;
        msg << table.source << ": unbalanced panel: " << table.rows.size() << " rows for " << panel.n << " units x "
            << panel.T << " periods";
        throw SchemaError(kModule, msg.str());
    }
    panel.y = Eigen::VectorXd::Zero(N);
    panel.d.resize(N);
    panel.X.resize(N, static_cast<Eigen::Index>(cx.size()));
    std::vector<char> filled(static_cast<std::size_t>(N), 0);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const int i = lookup(uidx, table.rows[r][static_cast<std::size_t>(cu)], table, r, cu);
        const int t = lookup(tidx, table.rows[r][static_cast<std::size_t>(ct)], table, r, ct);
        const auto row = panel.row(i, t);
        if (filled[static_cast<std::size_t>(row)])
            throw SchemaError(kModule, table.where(r, ct) + ": duplicate (unit, time) pair");
        filled[static_cast<std::size_t>(row)] = 1;
        if (cy >= 0) panel.y(row) = table.number(r, cy);
        const double dv = table.number(r, cd);
        if (schema.binary_treatment && dv != 0.0 && dv != 1.0)
            throw SchemaError(kModule, table.where(r, cd) + ": treatment must be 0 or 1");
        panel.d(row) = dv;
        for (std::size_t k = 0; k < cx.size(); ++k) panel.X(row, static_cast<Eigen::Index>(k)) = table.number(r, cx[k]);
    }
    panel.unit_labels = std::move(units);
    panel.time_labels = std::move(times);
    panel.column_names = std::move(names);
    panel.validate();
    return panel;
}

std::string panel_to_csv(const PanelDataset& panel, const std::string& response, const std::string& treatment) {
    std::ostringstream out;
    out << "unit,time," << csv_cell(response) << ',' << csv_cell(treatment);
    for (const auto& name : panel.column_names) out << ',' << csv_cell(name);
    out << '\n';
    for (int i = 0; i < panel.n; ++i) {
        for (int t = 0; t < panel.T; ++t) {
            const auto r = panel.row(i, t);
            out << csv_cell(panel.unit_labels[static_cast<std::size_t>(i)]) << ','
                << csv_cell(panel.time_labels[static_cast<std::size_t>(t)]) << ',' << format_double(panel.y(r)) << ','
                << format_double(panel.d(r));
            for (Eigen::Index j = 0; j < panel.X.cols(); ++j) out << ',' << format_double(panel.X(r, j));
            out << '\n';
        }
    }
    return out.str();
}

EnrollmentComponents components_from_tables(const CsvTable& states, const CsvTable& flows) {
    const int su = states.require("unit");
    const int st = states.require("time");
    const int shg = states.require("HG");
    const int sint = states.require("NE_int");
    const int sno = states.find("NO");

    // Full periods carry NE_int; rows without it only supply lagged HG.
    std::vector<std::string> units, full, lead;
    {
        std::map<std::string, int> seen_u, seen_full, seen_lead;
        for (std::size_t r = 0; r < states.rows.size(); ++r) {
            const auto& row = states.rows[r];
            if (seen_u.emplace(row[static_cast<std::size_t>(su)], 0).second) units.push_back(row[static_cast<std::size_t>(su)]);
            const auto& t = row[static_cast<std::size_t>(st)];
            if (states.empty_cell(r, sint)) {
                if (seen_lead.emplace(t, 0).second) lead.push_back(t);
            } else if (seen_full.emplace(t, 0).second) {
                full.push_back(t);
            }
        }
    }
    full = order_periods(full);
    lead = order_periods(lead);
    for (const auto& t : lead)
        if (std::find(full.begin(), full.end(), t) != full.end())
            throw SchemaError(kModule, states.source + ": period '" + t + "' mixes rows with and without NE_int");
    if (lead.size() > 2) throw SchemaError(kModule, states.source + ": at most two pre-sample periods are supported");

    EnrollmentComponents c;
    c.n = static_cast<int>(units.size());
    c.T = static_cast<int>(full.size());
    c.hg_lead = static_cast<int>(lead.size());
    if (c.n == 0 || c.T == 0) throw SchemaError(kModule, states.source + ": no complete periods");
    const auto uidx = index_of(units);
    std::vector<std::string> all_periods = lead;
    all_periods.insert(all_periods.end(), full.begin(), full.end());
    const auto pidx = index_of(all_periods);

    c.hg = Eigen::MatrixXd::Constant(c.n, c.hg_lead + c.T, std::numeric_limits<double>::quiet_NaN());
    c.ne_int = Eigen::MatrixXd::Constant(c.n, c.T, std::numeric_limits<double>::quiet_NaN());
    if (sno >= 0) c.no = Eigen::MatrixXd::Constant(c.n, c.T, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < states.rows.size(); ++r) {
        const int i = lookup(uidx, states.rows[r][static_cast<std::size_t>(su)], states, r, su);
        const int col = lookup(pidx, states.rows[r][static_cast<std::size_t>(st)], states, r, st);
        if (!std::isnan(c.hg(i, col))) throw SchemaError(kModule, states.where(r, st) + ": duplicate (unit, time) pair");
        c.hg(i, col) = states.number(r, shg);
        if (col >= c.hg_lead) {
            c.ne_int(i, col - c.hg_lead) = states.number(r, sint);
            if (sno >= 0) c.no(i, col - c.hg_lead) = states.number(r, sno);
        }
    }
    if (c.hg.hasNaN() || c.ne_int.hasNaN() || (sno >= 0 && c.no.hasNaN()))
        throw SchemaError(kModule, states.source + ": unbalanced states file (missing unit/period rows)");

    const int fo = flows.require("origin");
    const int fd = flows.require("destination");
    const int ft = flows.require("time");
    const int fne = flows.require("NE_from");
    const std::array<int, 3> flag = {flows.find("NE_lag0"), flows.find("NE_lag1"), flows.find("NE_lag2")};
    const bool lags = flag[0] >= 0 || flag[1] >= 0 || flag[2] >= 0;
    if (lags && (flag[0] < 0 || flag[1] < 0 || flag[2] < 0))
        throw SchemaError(kModule, flows.source + ": lag columns NE_lag0, NE_lag1 and NE_lag2 must appear together");
    const auto tidx = index_of(full);

    c.ne_from.assign(static_cast<std::size_t>(c.T), Eigen::MatrixXd::Zero(c.n, c.n));
    if (lags) {
        c.ne_lag.resize(static_cast<std::size_t>(c.T));
        for (auto& a : c.ne_lag)
            for (auto& m : a) m = Eigen::MatrixXd::Zero(c.n, c.n);
    }
    std::vector<char> seen(static_cast<std::size_t>(c.n) * c.n * c.T, 0);
    for (std::size_t r = 0; r < flows.rows.size(); ++r) {
        const int j = lookup(uidx, flows.rows[r][static_cast<std::size_t>(fo)], flows, r, fo);
        const int i = lookup(uidx, flows.rows[r][static_cast<std::size_t>(fd)], flows, r, fd);
        const int t = lookup(tidx, flows.rows[r][static_cast<std::size_t>(ft)], flows, r, ft);
        auto& mark = seen[(static_cast<std::size_t>(t) * c.n + j) * c.n + i];
        if (mark) throw SchemaError(kModule, flows.where(r, ft) + ": duplicate (origin, destination, time) triple");
        mark = 1;
        c.ne_from[static_cast<std::size_t>(t)](j, i) = flows.number(r, fne);
        if (lags)
            for (int l = 0; l < 3; ++l) c.ne_lag[static_cast<std::size_t>(t)][l](j, i) = flows.number(r, flag[l]);
    }
    c.unit_labels = std::move(units);
    c.time_labels = std::move(full);
    c.validate();
    return c;
}

BoolMatrix fees_from_table(const CsvTable& table, const std::vector<std::string>& units,
                           const std::vector<std::string>& times) {
    const int cu = table.require("unit");
    const int ct = table.require("time");
    const int cf = table.require("fee");
    const auto uidx = index_of(units);
    const auto tidx = index_of(times);
    BoolMatrix fees = BoolMatrix::Constant(static_cast<Eigen::Index>(units.size()),
                                           static_cast<Eigen::Index>(times.size()), false);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const int i = lookup(uidx, table.rows[r][static_cast<std::size_t>(cu)], table, r, cu);
        const int t = lookup(tidx, table.rows[r][static_cast<std::size_t>(ct)], table, r, ct);
        const double v = table.number(r, cf);
        if (v != 0.0 && v != 1.0) throw SchemaError(kModule, table.where(r, cf) + ": fee must be 0 or 1");
        fees(i, t) = v == 1.0;
    }
    return fees;
}

BoolMatrix adjacency_from_table(const CsvTable& table, const std::vector<std::string>& units) {
    const int ca = table.require("unit_a");
    const int cb = table.require("unit_b");
    const auto uidx = index_of(units);
    const auto n = static_cast<Eigen::Index>(units.size());
    BoolMatrix adj = BoolMatrix::Constant(n, n, false);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const int a = lookup(uidx, table.rows[r][static_cast<std::size_t>(ca)], table, r, ca);
        const int b = lookup(uidx, table.rows[r][static_cast<std::size_t>(cb)], table, r, cb);
        if (a == b) throw SchemaError(kModule, table.where(r, cb) + ": a unit cannot neighbour itself");
        adj(a, b) = adj(b, a) = true;
    }
    return adj;
}

std::string response_grid_csv(const ResponseGrid& grid, const std::vector<std::string>& units,
                              const std::vector<std::string>& times) {
    std::ostringstream out;
    out << "unit,time,theta,y\n";
    const auto T = static_cast<Eigen::Index>(times.size());
    for (std::size_t k = 0; k < grid.theta_values.size(); ++k) {
        for (std::size_t i = 0; i < units.size(); ++i) {
            for (Eigen::Index t = 0; t < T; ++t) {
                out << csv_cell(units[i]) << ',' << csv_cell(times[static_cast<std::size_t>(t)]) << ','
                    << format_double(grid.theta_values[k]) << ','
                    << format_double(grid.y_grid(static_cast<Eigen::Index>(i) * T + t, static_cast<Eigen::Index>(k)))
                    << '\n';
            }
        }
    }
    return out.str();
}

std::string response_csv(const Eigen::VectorXd& y, const std::vector<std::string>& units,
                         const std::vector<std::string>& times) {
    std::ostringstream out;
    out << "unit,time,y\n";
    const auto T = static_cast<Eigen::Index>(times.size());
    for (std::size_t i = 0; i < units.size(); ++i)
        for (Eigen::Index t = 0; t < T; ++t)
            out << csv_cell(units[i]) << ',' << csv_cell(times[static_cast<std::size_t>(t)]) << ','
                << format_double(y(static_cast<Eigen::Index>(i) * T + t)) << '\n';
    return out.str();
}

}  // namespace stabds::csv
