#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "umml/embed_store.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string &tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("umml_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path);
    out << text;
}

inline umml::Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &rng) {
    std::normal_distribution<double> dist;
    umml::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

inline umml::Matrix unit_rows(umml::Matrix m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
    return m;
}

inline std::vector<std::string> words(const std::string &prefix, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

inline umml::EmbeddingMatrix embedding(const std::string &lang, umml::Matrix m) {
    auto vocab = words(lang + "_", static_cast<std::size_t>(m.rows()));
    return umml::EmbeddingMatrix(lang, std::move(vocab), std::move(m));
}

}  // namespace testutil
