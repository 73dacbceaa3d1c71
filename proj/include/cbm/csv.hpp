#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cbm {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// Parses a double, rejecting trailing garbage.
double parse_double(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Numeric CSV matrix, no header; one row per line.
Eigen::MatrixXd read_matrix_csv(std::istream& in);
Eigen::MatrixXd load_matrix_csv(const std::string& path);
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
void save_matrix_csv(const std::string& path, const Eigen::MatrixXd& m);

}  // namespace cbm
