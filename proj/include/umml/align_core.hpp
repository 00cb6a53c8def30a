#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "umml/embed_store.hpp"

namespace umml {

using IndexPair = std::pair<std::size_t, std::size_t>;
using WordPair = std::pair<std::string, std::string>;

// Sparse seed dictionary: (source row, target row) pairs. Many-to-many is
// allowed; exact duplicate pairs are not.
struct Lexicon {
    std::string src_lang;
    std::string tgt_lang;
    std::vector<IndexPair> pairs;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

// Drops repeated pairs, keeping first occurrences in order.
Lexicon deduplicated(Lexicon lexicon);

// Pairs of `a` followed by the pairs of `b` not already in `a`.
Lexicon lexicon_union(const Lexicon &a, const Lexicon &b);

// Throws unless every index is in range and no pair repeats.
void check_lexicon(const Lexicon &lexicon, std::size_t n_src, std::size_t n_tgt);

std::vector<WordPair> to_words(const Lexicon &lexicon, const EmbeddingMatrix &src,
                               const EmbeddingMatrix &tgt);

struct IndexedLexicon {
    Lexicon lexicon;
    std::size_t skipped = 0;  // pairs with a word missing from either vocabulary
};

IndexedLexicon to_indices(const std::vector<WordPair> &pairs, const EmbeddingMatrix &src,
                          const EmbeddingMatrix &tgt);

// "<src> <tgt>" per line; a tab separator is also accepted. Blank lines skipped.
std::vector<WordPair> read_word_pairs(const std::filesystem::path &path);
void write_word_pairs(const std::vector<WordPair> &pairs, const std::filesystem::path &path);

struct OrthogonalMap {
    Matrix matrix;

    // ||W^T W - I||_F
    double orthogonality_error() const;

    // Rows of `x` mapped by W, i.e. x W^T.
    Matrix apply(const Matrix &x) const { return x * matrix.transpose(); }
};

// Global minimizer of sum_i ||W x_i - z_i||^2 over all orthogonal W
// (reflections included): W = V U^T where X^T Z = U S V^T.
OrthogonalMap solve_procrustes(const Matrix &x_sel, const Matrix &z_sel);

// Procrustes on the rows named by a lexicon.
OrthogonalMap solve_procrustes(const Lexicon &lexicon, const Matrix &x, const Matrix &z);

struct Retrieval {
    enum class Kind { NearestNeighbor, Csls };
    Kind kind = Kind::Csls;
    std::size_t k = 10;

    static Retrieval nn() { return {Kind::NearestNeighbor, 0}; }
    static Retrieval csls(std::size_t k = 10) { return {Kind::Csls, k}; }

    std::string describe() const;
};

Retrieval parse_retrieval(const std::string &text);

enum class Direction { Forward, Backward, Union };

Direction parse_direction(const std::string &text);

inline constexpr std::size_t kDefaultBlockRows = 1024;

// For each query row, the mean of its k largest cosines against `keys`.
// Both inputs are assumed unit-norm. Processed `block_rows` queries at a time.
Vector mean_topk_similarity(const Matrix &queries, const Matrix &keys, std::size_t k,
                            std::size_t block_rows = kDefaultBlockRows);

// CSLS(i, j) = 2 cos(i, j) - r_T(i) - r_S(j). Materializes the full result,
// so meant for moderate sizes; retrieval code uses the blockwise pieces.
Matrix csls_scores(const Matrix &mapped_src, const Matrix &tgt, std::size_t k,
                   std::size_t block_rows = kDefaultBlockRows);

// Throws unless every row has unit norm within `tol`.
void check_unit_rows(const Matrix &m, const char *what, double tol = 1e-6);

// Nearest-neighbour lexicon between W-mapped source rows and target rows.
// Forward: best target per source. Backward: best source per target under the
// same mapped-source scores. Ties go to the lower index.
Lexicon induce_lexicon(const OrthogonalMap &w, const EmbeddingMatrix &x, const EmbeddingMatrix &z,
                       const Retrieval &retrieval, Direction direction,
                       std::size_t block_rows = kDefaultBlockRows);

// Same, on raw unit-norm matrices already in a shared space.
Lexicon induce_lexicon(const Matrix &mapped_src, const Matrix &tgt, const Retrieval &retrieval,
                       Direction direction, std::size_t block_rows = kDefaultBlockRows);

// Mean cosine of W x_a and z_b over the lexicon pairs.
double mean_pair_cosine(const Lexicon &lexicon, const Matrix &mapped_src, const Matrix &tgt);

}  // namespace umml
