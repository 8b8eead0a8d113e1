#include "omega_map/csv_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace omap {

void emit_matrix_grid(const MatrixGrid& grid, std::ostream& out) {
    if (grid.values.empty()) throw ConfigError("cannot emit an empty matrix grid");
    const auto n = grid.values.front().rows();
    out << "x";
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out << ",m_" << (i + 1) << "_" << (j + 1);
    out << "\n";
    char buf[64];
    for (int k = 0; k < grid.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", grid.x_at(k));
        out << buf;
        const auto& m = grid.values[k];
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
                out << "," << buf;
            }
        out << "\n";
    }
}

MatrixGrid parse_matrix_grid(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty CSV");
    std::size_t cols = 1;
    for (char ch : line)
        if (ch == ',') ++cols;
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(double(cols - 1))));
    if (n * n + 1 != static_cast<Eigen::Index>(cols))
        throw ConfigError("CSV columns do not form x + an N x N matrix");

    std::vector<double> xs;
    MatrixGrid grid;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() != cols) throw ConfigError("CSV row has the wrong number of cells");
        xs.push_back(row[0]);
        Eigen::MatrixXd m(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) m(i, j) = row[1 + i * n + j];
        grid.values.push_back(std::move(m));
    }
    if (xs.empty()) throw ConfigError("CSV has no data rows");
    grid.x0 = xs.front();
    grid.h = xs.size() > 1 ? xs[1] - xs[0] : 1.0;
    return grid;
}

void write_file_atomic(const std::string& path, const std::string& payload) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open output file: " + tmp.string());
        out << payload;
        if (!out.good()) {
            out.close();
            fs::remove(tmp);
            throw ConfigError("write failed for: " + tmp.string());
        }
    }
    fs::rename(tmp, target);
}

}  // namespace omap
