#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "umml/align_core.hpp"

namespace umml {

struct BliResult {
    std::string src_lang;
    std::string tgt_lang;
    std::map<std::size_t, double> precision_at;
    std::size_t oov_count = 0;        // distinct test words with no usable gold pair
    std::size_t evaluated_count = 0;  // distinct test words scored
};

// Precision@k for translation retrieval from src_latent into the whole of
// tgt_latent. A test word is correct at k when any of its in-vocabulary gold
// translations ranks in its top k; ranking ties go to the lower target index.
// Words missing from the source vocabulary, or whose gold targets are all
// missing, count as OOV and are left out of the denominator.
BliResult eval_bli(const EmbeddingMatrix &src_latent, const EmbeddingMatrix &tgt_latent,
                   const std::vector<WordPair> &gold, const std::vector<std::size_t> &ks,
                   const Retrieval &retrieval = Retrieval::csls(10), std::size_t block_rows = kDefaultBlockRows);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(const std::vector<double> &values);

// Pearson correlation of average ranks.
double spearman(const std::vector<double> &a, const std::vector<double> &b);

struct ScoredPair {
    std::string a;
    std::string b;
    double score = 0.0;
};

struct ClwsResult {
    double rho = 0.0;
    std::size_t used = 0;
    std::size_t oov = 0;
};

// Spearman correlation between gold scores and latent cosines over the pairs
// whose words are both in vocabulary.
ClwsResult eval_clws(const EmbeddingMatrix &latent_a, const EmbeddingMatrix &latent_b,
                     const std::vector<ScoredPair> &gold);

// "word_a word_b score" per line.
std::vector<ScoredPair> read_scored_pairs(const std::filesystem::path &path);

// All (a, b) such that (a, p) and (p, b) are listed for some pivot word p,
// without repeats, ordered by first derivation.
std::vector<WordPair> construct_pivot_testset(const std::vector<WordPair> &a_to_pivot,
                                              const std::vector<WordPair> &pivot_to_b);
Lexicon construct_pivot_testset(const Lexicon &a_to_pivot, const Lexicon &pivot_to_b);

std::string format_bli_table(const std::vector<BliResult> &results);

}  // namespace umml
