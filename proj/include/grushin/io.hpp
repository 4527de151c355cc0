#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "grushin/pde.hpp"
#include "grushin/simulate.hpp"

namespace grushin {

/// CSV writers: comma-separated, header row, LF line endings, floats with
/// 17 significant digits. One row per grid node / cell.

void write_field_csv(const std::filesystem::path& path, const Field& field,
                     const std::string& value_column = "value");

void write_histogram_csv(const std::filesystem::path& path, const Histogram2D& hist);

/// Reads a 3-column node CSV written by the functions above back into a
/// Field; the grid geometry is reconstructed from the node coordinates.
Field read_field_csv(const std::filesystem::path& path);

std::string format_double(double v);

/// FNV-1a 64-bit content hash of a file, hex encoded. Used by the run
/// manifest to detect artifact drift.
std::string fnv1a64_file(const std::filesystem::path& path);

}  // namespace grushin
