#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "umml/align_core.hpp"

namespace umml {

// Knobs for the self-learning loop. The dropout schedule starts at
// keep_prob_start and multiplies by keep_prob_growth each time the objective
// stalls for stall_patience iterations.
struct SelfLearnConfig {
    std::size_t init_vocab = 4000;
    double keep_prob_start = 0.1;
    double keep_prob_growth = 2.0;
    std::size_t stall_patience = 50;
    std::size_t max_iters = 2000;
    Retrieval retrieval = Retrieval::csls(10);
    Direction direction = Direction::Union;
    double objective_tol = 1e-6;
    std::uint64_t seed = 0;
    std::size_t block_rows = kDefaultBlockRows;

    void validate() const;
};

struct SelfLearnStep {
    std::size_t iter = 0;
    double objective = 0.0;
    double keep_prob = 0.0;
    std::size_t lexicon_size = 0;
};

struct SelfLearnResult {
    Lexicon lexicon;  // final full induction, no dropout
    Lexicon seed;     // output of the unsupervised initialization
    std::vector<SelfLearnStep> history;
};

// Similarity-distribution initialization. For the first init_vocab rows of
// each language: M = X X^T, shifted by its minimum, square-rooted, each row
// sorted descending and unit-normalized. Rows are matched across languages by
// nearest neighbour over these signatures, in both directions.
Lexicon init_unsupervised(const EmbeddingMatrix &x, const EmbeddingMatrix &z, std::size_t init_vocab);

// Unsupervised initialization followed by stochastic dictionary induction.
// The initialization uses min(cfg.init_vocab, |x|, |z|) rows.
SelfLearnResult self_learn(const EmbeddingMatrix &x, const EmbeddingMatrix &z, const SelfLearnConfig &cfg);

// iter,objective,keep_prob,lexicon_size
void write_selflearn_log(const std::vector<SelfLearnStep> &history, const std::filesystem::path &path);

}  // namespace umml
