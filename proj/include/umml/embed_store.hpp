#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace umml {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// A language's vocabulary and its word vectors. Row i of `vectors()` embeds
// `vocab()[i]`; rows are in frequency order, most frequent first.
//
// Immutable once constructed. The constructor enforces: non-empty, unique
// words, row count equal to vocabulary size, finite entries.
class EmbeddingMatrix {
public:
    EmbeddingMatrix(std::string lang, std::vector<std::string> vocab, Matrix vectors,
                    std::size_t duplicates_skipped = 0);

    const std::string &lang() const { return lang_; }
    const std::vector<std::string> &vocab() const { return vocab_; }
    const Matrix &vectors() const { return vectors_; }
    std::size_t size() const { return vocab_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }

    // Duplicate words dropped while loading (first occurrence kept).
    std::size_t duplicates_skipped() const { return duplicates_skipped_; }

    std::optional<std::size_t> index_of(std::string_view word) const;

    // First min(n, size()) rows.
    EmbeddingMatrix head(std::size_t n) const;

    // Same vocabulary and language, new vectors (row count must match).
    EmbeddingMatrix with_vectors(Matrix vectors) const;

    EmbeddingMatrix with_lang(std::string lang) const;

private:
    std::string lang_;
    std::vector<std::string> vocab_;
    Matrix vectors_;
    std::size_t duplicates_skipped_ = 0;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class NormStep { Unit, Center };

std::vector<NormStep> default_normalization();
NormStep parse_norm_step(std::string_view name);
std::string_view to_string(NormStep step);

// Reads word2vec text format: a "<count> <dim>" header, then "<word> v1 .. vd"
// rows. Keeps the first min(count, max_vocab) distinct words.
EmbeddingMatrix load_embeddings(const std::filesystem::path &path, std::size_t max_vocab,
                                std::string lang = {});

// Applies the steps left to right. Unit on a zero-norm row throws, naming the word.
EmbeddingMatrix normalize(const EmbeddingMatrix &embeddings, const std::vector<NormStep> &steps);

// Writes the format load_embeddings reads. Values use the shortest decimal form
// that parses back to the same double, so a reload is exact.
void save_embeddings(const EmbeddingMatrix &embeddings, const std::filesystem::path &path);

}  // namespace umml
