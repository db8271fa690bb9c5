#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "msbs/data_design.hpp"
#include "msbs/error.hpp"

namespace msbs {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::ptrdiff_t find(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
        return -1;
    }

    /// Numeric column; missing or non-numeric cells are an error.
    std::vector<double> numeric_column(std::string_view name) const;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(trim(cell));
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw Error(ErrorKind::InvalidInput, "row " + std::to_string(t.rows.size() + 1) + " has " +
                                                     std::to_string(cells.size()) + " fields, expected " +
                                                     std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) throw Error(ErrorKind::InvalidInput, "empty CSV input");
    return t;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidInput, "cannot open '" + path + "'");
    return parse_csv(in);
}

inline std::vector<double> CsvTable::numeric_column(std::string_view name) const {
    const auto idx = find(name);
    if (idx < 0) throw Error(ErrorKind::InvalidInput, "column '" + std::string(name) + "' not found");
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double v = 0.0;
        if (!detail::parse_double(rows[r][static_cast<std::size_t>(idx)], v))
            throw Error(ErrorKind::InvalidInput, "missing or non-numeric value in column '" + std::string(name) +
                                                     "' at row " + std::to_string(r + 1));
        out.push_back(v);
    }
    return out;
}

/// Build a dataset from a table given the column roles.
inline Dataset dataset_from_table(const CsvTable& table, const std::string& response,
                                  const std::vector<std::string>& nonlinear,
                                  const std::vector<std::string>& linear) {
    if (table.find(response) < 0) throw Error(ErrorKind::InvalidInput, "response column '" + response + "' not found");
    for (const auto& names : {nonlinear, linear})
        for (const auto& name : names)
            if (table.find(name) < 0) throw Error(ErrorKind::InvalidInput, "column '" + name + "' not found");
    if (nonlinear.empty() && linear.empty()) throw Error(ErrorKind::InvalidInput, "no predictor columns given");
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    if (n == 0) throw Error(ErrorKind::InvalidInput, "dataset has no rows");

    const auto y = table.numeric_column(response);
    MatrixXd x(n, static_cast<Eigen::Index>(nonlinear.size()));
    MatrixXd z(n, static_cast<Eigen::Index>(linear.size()));
    for (std::size_t j = 0; j < nonlinear.size(); ++j) {
        const auto col = table.numeric_column(nonlinear[j]);
        x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const VectorXd>(col.data(), n);
    }
    for (std::size_t k = 0; k < linear.size(); ++k) {
        const auto col = table.numeric_column(linear[k]);
        z.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const VectorXd>(col.data(), n);
    }
    return make_dataset(Eigen::Map<const VectorXd>(y.data(), n), std::move(x), std::move(z), nonlinear, linear,
                        response);
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace msbs
