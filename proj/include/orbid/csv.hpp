#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "orbid/types.hpp"

namespace orbid {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') { out.push_back(cur); cur.clear(); }
        else if (ch != '\r') cur += ch;
    }
    out.push_back(cur);
    for (auto& s : out) {
        size_t a = s.find_first_not_of(" \t");
        size_t b = s.find_last_not_of(" \t");
        s = (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
    }
    return out;
}

inline double parse_cell(const std::string& cell, const std::string& column, Eigen::Index row) {
    try {
        size_t used = 0;
        double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(unsigned(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        if (!std::isfinite(v))
            throw DataError("non-finite value in column " + column + " at row " + std::to_string(row));
        return v;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception&) {
        throw DataError("cannot parse value '" + cell + "' in column " + column +
                        " at row " + std::to_string(row));
    }
}

}  // namespace detail

// Reads the recorded-data schema: header `t,u1..um,y1..yp`, one sample per
// row. Row numbers in error messages are 1-based over the data rows.
inline RawSeries load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open csv file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("csv file is empty: " + path);
    auto header = detail::split_csv_line(line);
    if (header.empty() || header[0] != "t")
        throw DataError("csv header must start with column t");
    Eigen::Index m = 0, p = 0;
    size_t col = 1;
    while (col < header.size() && header[col] == "u" + std::to_string(m + 1)) { ++m; ++col; }
    while (col < header.size() && header[col] == "y" + std::to_string(p + 1)) { ++p; ++col; }
    if (col != header.size() || p == 0)
        throw DataError("csv header must be t,u1..um,y1..yp");

    std::vector<std::vector<double>> rows;
    Eigen::Index rownum = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++rownum;
        auto cells = detail::split_csv_line(line);
        if (Eigen::Index(cells.size()) != 1 + m + p)
            throw DataError("wrong cell count at row " + std::to_string(rownum));
        std::vector<double> vals(cells.size());
        for (size_t j = 0; j < cells.size(); ++j) {
            const std::string& name = header[j];
            vals[j] = detail::parse_cell(cells[j], name, rownum);
        }
        rows.push_back(std::move(vals));
    }
    const Eigen::Index N = Eigen::Index(rows.size());
    if (N < 2) throw DataError("csv needs at least 2 data rows");
    RawSeries s;
    s.times.resize(N);
    s.inputs.resize(N, m);
    s.outputs.resize(N, p);
    for (Eigen::Index i = 0; i < N; ++i) {
        s.times(i) = rows[size_t(i)][0];
        for (Eigen::Index j = 0; j < m; ++j) s.inputs(i, j) = rows[size_t(i)][size_t(1 + j)];
        for (Eigen::Index j = 0; j < p; ++j) s.outputs(i, j) = rows[size_t(i)][size_t(1 + m + j)];
        if (i > 0 && !(s.times(i) > s.times(i - 1)))
            throw DataError("non-monotone time at row " + std::to_string(i + 1));
    }
    return s;
}

inline void write_csv(const std::string& path, const RawSeries& s) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open csv file for writing: " + path);
    os.precision(17);
    os << "t";
    for (Eigen::Index j = 0; j < s.input_dim(); ++j) os << ",u" << j + 1;
    for (Eigen::Index j = 0; j < s.output_dim(); ++j) os << ",y" << j + 1;
    os << '\n';
    for (Eigen::Index i = 0; i < s.samples(); ++i) {
        os << s.times(i);
        for (Eigen::Index j = 0; j < s.input_dim(); ++j) os << ',' << s.inputs(i, j);
        for (Eigen::Index j = 0; j < s.output_dim(); ++j) os << ',' << s.outputs(i, j);
        os << '\n';
    }
}

// TrajectoryRecord schema: `t,x1..xn,xdot1..xdotn,u1..um,y1..yp`.
inline void write_csv(const std::string& path, const TrajectoryRecord& r) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open csv file for writing: " + path);
    os.precision(17);
    os << "t";
    for (Eigen::Index j = 0; j < r.state_dim(); ++j) os << ",x" << j + 1;
    for (Eigen::Index j = 0; j < r.state_dim(); ++j) os << ",xdot" << j + 1;
    for (Eigen::Index j = 0; j < r.input_dim(); ++j) os << ",u" << j + 1;
    for (Eigen::Index j = 0; j < r.output_dim(); ++j) os << ",y" << j + 1;
    os << '\n';
    for (Eigen::Index i = 0; i < r.samples(); ++i) {
        os << r.dt * double(i);
        for (Eigen::Index j = 0; j < r.state_dim(); ++j) os << ',' << r.x(i, j);
        for (Eigen::Index j = 0; j < r.state_dim(); ++j) os << ',' << r.xdot(i, j);
        for (Eigen::Index j = 0; j < r.input_dim(); ++j) os << ',' << r.u(i, j);
        for (Eigen::Index j = 0; j < r.output_dim(); ++j) os << ',' << r.y(i, j);
        os << '\n';
    }
}

// Reads the TrajectoryRecord schema back. xddot is reconstructed by central
// differences of xdot (one-sided at the ends).
inline TrajectoryRecord load_record_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open csv file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("csv file is empty: " + path);
    auto header = detail::split_csv_line(line);
    if (header.empty() || header[0] != "t")
        throw DataError("record csv header must start with column t");
    Eigen::Index n = 0, m = 0, p = 0;
    size_t col = 1;
    while (col < header.size() && header[col] == "x" + std::to_string(n + 1)) { ++n; ++col; }
    for (Eigen::Index j = 0; j < n; ++j, ++col)
        if (col >= header.size() || header[col] != "xdot" + std::to_string(j + 1))
            throw DataError("record csv header must be t,x1..xn,xdot1..xdotn,u..,y..");
    while (col < header.size() && header[col] == "u" + std::to_string(m + 1)) { ++m; ++col; }
    while (col < header.size() && header[col] == "y" + std::to_string(p + 1)) { ++p; ++col; }
    if (col != header.size() || n == 0 || p == 0)
        throw DataError("record csv header must be t,x1..xn,xdot1..xdotn,u..,y..");

    std::vector<std::vector<double>> rows;
    Eigen::Index rownum = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++rownum;
        auto cells = detail::split_csv_line(line);
        if (Eigen::Index(cells.size()) != 1 + 2 * n + m + p)
            throw DataError("wrong cell count at row " + std::to_string(rownum));
        std::vector<double> vals(cells.size());
        for (size_t j = 0; j < cells.size(); ++j)
            vals[j] = detail::parse_cell(cells[j], header[j], rownum);
        rows.push_back(std::move(vals));
    }
    const Eigen::Index N = Eigen::Index(rows.size());
    if (N < 3) throw DataError("record csv needs at least 3 data rows");
    TrajectoryRecord r;
    r.dt = (rows.back()[0] - rows.front()[0]) / double(N - 1);
    r.x.resize(N, n);
    r.xdot.resize(N, n);
    r.xddot.resize(N, n);
    r.u.resize(N, m);
    r.y.resize(N, p);
    for (Eigen::Index i = 0; i < N; ++i) {
        const auto& v = rows[size_t(i)];
        for (Eigen::Index j = 0; j < n; ++j) r.x(i, j) = v[size_t(1 + j)];
        for (Eigen::Index j = 0; j < n; ++j) r.xdot(i, j) = v[size_t(1 + n + j)];
        for (Eigen::Index j = 0; j < m; ++j) r.u(i, j) = v[size_t(1 + 2 * n + j)];
        for (Eigen::Index j = 0; j < p; ++j) r.y(i, j) = v[size_t(1 + 2 * n + m + j)];
    }
    for (Eigen::Index i = 0; i < N; ++i) {
        const Eigen::Index lo = i == 0 ? 0 : i - 1;
        const Eigen::Index hi = i + 1 == N ? i : i + 1;
        r.xddot.row(i) = (r.xdot.row(hi) - r.xdot.row(lo)) / (double(hi - lo) * r.dt);
    }
    r.validate();
    return r;
}

}  // namespace orbid
