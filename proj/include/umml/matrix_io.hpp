#pragma once

#include <filesystem>

#include <Eigen/Dense>

namespace umml {

// Binary matrix files: rows and cols as little-endian uint64, then the
// entries in row-major order.
void write_matrix_f64(const Eigen::MatrixXd &m, const std::filesystem::path &path);
Eigen::MatrixXd read_matrix_f64(const std::filesystem::path &path);

void write_matrix_f32(const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> &m,
                      const std::filesystem::path &path);
Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> read_matrix_f32(
    const std::filesystem::path &path);

}  // namespace umml
