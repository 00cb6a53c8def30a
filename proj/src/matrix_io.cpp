#include "umml/matrix_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "umml/error.hpp"

namespace umml {

static_assert(std::endian::native == std::endian::little, "matrix files assume a little-endian host");

namespace {

using RowMajorD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename M>
void write_raw(const M &m, const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write matrix: " + path.string());
    const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    out.write(reinterpret_cast<const char *>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char *>(m.data()),
              static_cast<std::streamsize>(sizeof(typename M::Scalar) * static_cast<std::size_t>(m.size())));
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

template <typename M>
M read_raw(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open matrix: " + path.string());
    std::uint64_t dims[2] = {0, 0};
    in.read(reinterpret_cast<char *>(dims), sizeof(dims));
    if (!in) fail(ErrorKind::Format, path.string() + ": truncated header");
    const auto bytes = std::filesystem::file_size(path);
    const std::uint64_t expected = sizeof(dims) + dims[0] * dims[1] * sizeof(typename M::Scalar);
    if (bytes != expected) {
        fail(ErrorKind::Format, path.string() + ": size " + std::to_string(bytes) + " does not match " +
                                    std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + " header");
    }
    M m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    in.read(reinterpret_cast<char *>(m.data()),
            static_cast<std::streamsize>(sizeof(typename M::Scalar) * static_cast<std::size_t>(m.size())));
    if (!in) fail(ErrorKind::Format, path.string() + ": truncated data");
    return m;
}

}  // namespace

void write_matrix_f64(const Eigen::MatrixXd &m, const std::filesystem::path &path) {
    write_raw(RowMajorD(m), path);
}

Eigen::MatrixXd read_matrix_f64(const std::filesystem::path &path) {
    return read_raw<RowMajorD>(path);
}

void write_matrix_f32(const RowMajorF &m, const std::filesystem::path &path) { write_raw(m, path); }

RowMajorF read_matrix_f32(const std::filesystem::path &path) { return read_raw<RowMajorF>(path); }

}  // namespace umml
