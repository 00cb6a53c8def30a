#include "umml/align_selflearn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <random>

#include "umml/error.hpp"

namespace umml {

namespace {

Matrix similarity_signatures(const Matrix &rows) {
    Matrix sim = rows * rows.transpose();
    sim.array() -= sim.minCoeff();
    sim = sim.array().sqrt();
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
        auto row = sim.row(i);
        std::sort(row.data(), row.data() + row.size(), std::greater<>());
        const double norm = row.norm();
        if (norm > 0) row /= norm;
    }
    return sim;
}

Lexicon drop_pairs(const Lexicon &lexicon, double keep_prob, std::mt19937_64 &rng) {
    if (keep_prob >= 1.0) return lexicon;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Lexicon out{lexicon.src_lang, lexicon.tgt_lang, {}};
    for (const auto &p : lexicon.pairs) {
        if (uniform(rng) < keep_prob) out.pairs.push_back(p);
    }
    return out;
}

}  // namespace

void SelfLearnConfig::validate() const {
    if (init_vocab == 0) fail(ErrorKind::Config, "selflearn.init_vocab must be positive");
    if (!(keep_prob_start > 0.0 && keep_prob_start <= 1.0)) {
        fail(ErrorKind::Config, "selflearn.keep_prob_start must be in (0, 1]");
    }
    if (!(keep_prob_growth > 1.0)) fail(ErrorKind::Config, "selflearn.keep_prob_growth must exceed 1");
    if (stall_patience == 0) fail(ErrorKind::Config, "selflearn.stall_patience must be positive");
    if (max_iters == 0) fail(ErrorKind::Config, "selflearn.max_iters must be positive");
    if (!(objective_tol >= 0.0)) fail(ErrorKind::Config, "selflearn.objective_tol must be non-negative");
    if (retrieval.kind == Retrieval::Kind::Csls && retrieval.k == 0) {
        fail(ErrorKind::Config, "selflearn CSLS k must be positive");
    }
    if (block_rows == 0) fail(ErrorKind::Config, "selflearn.block_rows must be positive");
}

Lexicon init_unsupervised(const EmbeddingMatrix &x, const EmbeddingMatrix &z, std::size_t init_vocab) {
    if (init_vocab == 0 || init_vocab > x.size() || init_vocab > z.size()) {
        fail(ErrorKind::Input, "init_vocab=" + std::to_string(init_vocab) + " exceeds the vocabularies (" +
                                   std::to_string(x.size()) + ", " + std::to_string(z.size()) + ")");
    }
    const auto n = static_cast<Eigen::Index>(init_vocab);
    const Matrix sig_x = similarity_signatures(x.vectors().topRows(n));
    const Matrix sig_z = similarity_signatures(z.vectors().topRows(n));
    Lexicon seed = induce_lexicon(sig_x, sig_z, Retrieval::nn(), Direction::Union);
    seed.src_lang = x.lang();
    seed.tgt_lang = z.lang();
    return seed;
}

SelfLearnResult self_learn(const EmbeddingMatrix &x, const EmbeddingMatrix &z, const SelfLearnConfig &cfg) {
    cfg.validate();
    if (x.dim() != z.dim()) fail(ErrorKind::Input, "self-learning needs equal dimensions");

    SelfLearnResult result;
    result.seed = init_unsupervised(x, z, std::min({cfg.init_vocab, x.size(), z.size()}));
    if (result.seed.empty()) fail(ErrorKind::Numeric, "unsupervised initialization produced an empty lexicon");

    std::mt19937_64 rng(cfg.seed);
    Lexicon current = result.seed;
    double keep_prob = cfg.keep_prob_start;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t stalled = 0;

    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        const OrthogonalMap w = solve_procrustes(current, x.vectors(), z.vectors());
        const Matrix mapped = w.apply(x.vectors());
        Lexicon induced = induce_lexicon(mapped, z.vectors(), cfg.retrieval, cfg.direction, cfg.block_rows);
        induced.src_lang = x.lang();
        induced.tgt_lang = z.lang();

        const double objective = mean_pair_cosine(induced, mapped, z.vectors());
        if (!std::isfinite(objective)) fail(ErrorKind::Numeric, "self-learning objective is not finite");
        result.history.push_back({iter, objective, keep_prob, induced.size()});

        if (objective > best + cfg.objective_tol) {
            best = objective;
            stalled = 0;
        } else {
            ++stalled;
        }
        result.lexicon = induced;

        if (stalled >= cfg.stall_patience) {
            if (keep_prob >= 1.0) break;
            keep_prob = std::min(1.0, keep_prob * cfg.keep_prob_growth);
            stalled = 0;
        }
        current = drop_pairs(induced, keep_prob, rng);
        if (current.empty()) current = induced;
    }
    return result;
}

void write_selflearn_log(const std::vector<SelfLearnStep> &history, const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write log: " + path.string());
    out << "iter,objective,keep_prob,lexicon_size\n" << std::setprecision(17);
    for (const auto &step : history) {
        out << step.iter << ',' << step.objective << ',' << step.keep_prob << ',' << step.lexicon_size << '\n';
    }
}

}  // namespace umml
