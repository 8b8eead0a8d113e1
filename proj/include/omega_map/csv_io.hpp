#pragma once

#include <iosfwd>
#include <string>

#include "omega_map/grid.hpp"

namespace omap {

/// CSV with header "x,m_1_1,...,m_N_N" (row-major entries), 17 significant
/// digits, LF line endings; doubles round-trip bit-exactly.
void emit_matrix_grid(const MatrixGrid& grid, std::ostream& out);

MatrixGrid parse_matrix_grid(std::istream& in);

/// Writes through a temp file and renames, so failures leave no partial file.
void write_file_atomic(const std::string& path, const std::string& payload);

}  // namespace omap
