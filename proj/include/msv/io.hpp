#pragma once

// CSV and JSON input/output. Numbers are written in the shortest decimal
// form that parses back to the same double.

#include "msv/model.hpp"
#include "msv/panel.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace msv {

std::string format_double(double v);
/// Throws DataError unless the whole of text is a number.
double parse_double(std::string_view text);

/// Header row of asset identifiers then one row per day. Empty cells and the
/// token NaN are missing. Throws DataError with line/column context.
ReturnsPanel parse_panel(std::istream& in, const std::string& source = "<stream>");
ReturnsPanel ingest(const std::filesystem::path& path);

void write_panel(std::ostream& out, const ReturnsPanel& panel);
void export_panel(const std::filesystem::path& path, const ReturnsPanel& panel);

/// Dense header-free numeric CSV.
Eigen::MatrixXd parse_matrix(std::istream& in, const std::string& source = "<stream>");
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);

/// Draws without the per-time Sigma sums.
void save_draws(const std::filesystem::path& path, const PosteriorDraws& draws);
PosteriorDraws load_draws(const std::filesystem::path& path);

}  // namespace msv
