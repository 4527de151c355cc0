#include "grushin/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace grushin {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

void write_node_csv(const std::filesystem::path& path, const Grid2D& grid,
                    const Eigen::VectorXd& values, const std::string& value_column) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "y1_center,y2_center," << value_column << "\n";
    for (int i = 0; i < grid.n1; ++i)
        for (int j = 0; j < grid.n2; ++j)
            out << format_double(grid.y1(i)) << ',' << format_double(grid.y2(j))
                << ',' << format_double(values[grid.index(i, j)]) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

void write_field_csv(const std::filesystem::path& path, const Field& field,
                     const std::string& value_column) {
    write_node_csv(path, field.grid, field.values, value_column);
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram2D& hist) {
    write_node_csv(path, hist.grid, hist.mass, "density");
}

Field read_field_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path.string());

    std::set<double> y1s, y2s;
    std::vector<std::array<double, 3>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::array<double, 3> row{};
        char comma = 0;
        if (!(ss >> row[0] >> comma >> row[1] >> comma >> row[2]))
            throw std::runtime_error("malformed CSV row in " + path.string());
        rows.push_back(row);
        y1s.insert(row[0]);
        y2s.insert(row[1]);
    }
    const int n1 = static_cast<int>(y1s.size()), n2 = static_cast<int>(y2s.size());
    if (n1 < 3 || n2 < 3 || rows.size() != static_cast<size_t>(n1) * n2)
        throw std::runtime_error("CSV is not a full grid: " + path.string());
    const double r1 = -*y1s.begin(), r2 = -*y2s.begin();
    Field f(Grid2D::make(r1, r2, n1, n2));
    const double tol1 = f.grid.h1() * 1e-6, tol2 = f.grid.h2() * 1e-6;
    for (const auto& row : rows) {
        const int i = static_cast<int>(std::lround((row[0] + r1) / f.grid.h1()));
        const int j = static_cast<int>(std::lround((row[1] + r2) / f.grid.h2()));
        if (i < 0 || i >= n1 || j < 0 || j >= n2 ||
            std::abs(f.grid.y1(i) - row[0]) > tol1 ||
            std::abs(f.grid.y2(j) - row[1]) > tol2)
            throw std::runtime_error("CSV node off the uniform grid: " + path.string());
        f.at(i, j) = row[2];
    }
    return f;
}

std::string fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path.string());
    std::uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize k = 0; k < n; ++k) {
            h ^= static_cast<unsigned char>(buf[k]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

}  // namespace grushin
