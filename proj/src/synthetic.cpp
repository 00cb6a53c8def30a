#include "umml/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/QR>

#include "umml/error.hpp"

namespace umml {

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    // Fill row by row so the draw order does not depend on storage order.
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    }
    return m;
}

}  // namespace

Eigen::MatrixXd random_orthogonal(std::size_t d, std::mt19937_64 &rng) {
    const auto n = static_cast<Eigen::Index>(d);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(n, n, rng));
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    return q;
}

std::vector<PlantedLanguage> make_planted_family(const std::vector<std::string> &languages,
                                                 const PlantedSpec &spec, bool first_is_base) {
    if (languages.empty() || spec.n == 0 || spec.d == 0) fail(ErrorKind::Input, "empty planted family");
    std::mt19937_64 rng(spec.seed);
    const auto n = static_cast<Eigen::Index>(spec.n);
    const auto d = static_cast<Eigen::Index>(spec.d);

    Eigen::MatrixXd base = gaussian(n, d, rng);
    for (Eigen::Index k = 0; k < d; ++k) {
        base.col(k) *= std::exp(-spec.decay * static_cast<double>(k) / static_cast<double>(d));
    }

    std::vector<PlantedLanguage> out;
    out.reserve(languages.size());
    for (std::size_t l = 0; l < languages.size(); ++l) {
        const bool is_base = first_is_base && l == 0;
        Eigen::MatrixXd rotation = is_base ? Eigen::MatrixXd::Identity(d, d) : random_orthogonal(spec.d, rng);
        Eigen::MatrixXd rotated = base * rotation.transpose();
        if (!is_base && spec.noise > 0) rotated += spec.noise * gaussian(n, d, rng);

        std::vector<std::size_t> order(spec.n);  // order[row] = base index
        std::iota(order.begin(), order.end(), 0);
        if (spec.shuffle && !is_base) std::shuffle(order.begin(), order.end(), rng);

        std::vector<std::size_t> row_of(spec.n);
        Matrix vectors(n, d);
        std::vector<std::string> vocab(spec.n);
        for (std::size_t row = 0; row < spec.n; ++row) {
            const std::size_t b = order[row];
            row_of[b] = row;
            vectors.row(static_cast<Eigen::Index>(row)) = rotated.row(static_cast<Eigen::Index>(b));
            vocab[row] = languages[l] + "_" + std::to_string(b);
        }
        out.push_back({EmbeddingMatrix(languages[l], std::move(vocab), std::move(vectors)),
                       std::move(rotation), std::move(row_of)});
    }
    return out;
}

Lexicon planted_gold(const PlantedLanguage &src, const PlantedLanguage &tgt) {
    Lexicon gold{src.embeddings.lang(), tgt.embeddings.lang(), {}};
    gold.pairs.resize(src.row_of.size());
    for (std::size_t b = 0; b < src.row_of.size(); ++b) gold.pairs[b] = {src.row_of[b], tgt.row_of[b]};
    std::sort(gold.pairs.begin(), gold.pairs.end());
    return gold;
}

}  // namespace umml
