#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "umml/align_core.hpp"
#include "umml/embed_store.hpp"

namespace umml {

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
// of R's diagonal folded into Q. Determinant may be either sign.
Eigen::MatrixXd random_orthogonal(std::size_t d, std::mt19937_64 &rng);

// Planted-rotation test data. Every language is a rotated, optionally noisy,
// row-shuffled copy of one shared base cloud, so the true translation of base
// word i is known in every language.
struct PlantedLanguage {
    EmbeddingMatrix embeddings;
    Eigen::MatrixXd rotation;        // row x of the base maps to x R^T
    std::vector<std::size_t> row_of;  // base index -> row in `embeddings`
};

struct PlantedSpec {
    std::size_t n = 1000;
    std::size_t d = 50;
    double noise = 0.0;       // per-entry Gaussian sigma added after rotation
    double decay = 1.0;       // column k of the base is scaled by exp(-decay * k / d)
    bool shuffle = true;
    std::uint64_t seed = 1;
};

// languages[0] keeps the identity rotation and no noise when `first_is_base`.
std::vector<PlantedLanguage> make_planted_family(const std::vector<std::string> &languages,
                                                 const PlantedSpec &spec, bool first_is_base = true);

// Gold pairs between two planted languages, ordered by source row.
Lexicon planted_gold(const PlantedLanguage &src, const PlantedLanguage &tgt);

}  // namespace umml
