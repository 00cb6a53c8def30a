#include "umml/align_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <unordered_set>

#include <Eigen/SVD>

#include "umml/error.hpp"

namespace umml {

namespace {

std::uint64_t pair_key(const IndexPair &p) {
    return (static_cast<std::uint64_t>(p.first) << 32) ^ static_cast<std::uint64_t>(p.second);
}

Eigen::Index as_index(std::size_t n) { return static_cast<Eigen::Index>(n); }

// Visits row blocks of queries * keys^T.
template <typename Visit>
void for_each_block(const Matrix &queries, const Matrix &keys, std::size_t block_rows, Visit &&visit) {
    if (block_rows == 0) fail(ErrorKind::Input, "block size must be positive");
    const Eigen::Index n = queries.rows();
    const Eigen::Index step = as_index(block_rows);
    Matrix block;
    for (Eigen::Index start = 0; start < n; start += step) {
        const Eigen::Index rows = std::min(step, n - start);
        block.noalias() = queries.middleRows(start, rows) * keys.transpose();
        visit(start, block);
    }
}

}  // namespace

Lexicon deduplicated(Lexicon lexicon) {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(lexicon.pairs.size());
    std::vector<IndexPair> kept;
    kept.reserve(lexicon.pairs.size());
    for (const auto &p : lexicon.pairs) {
        if (seen.insert(pair_key(p)).second) kept.push_back(p);
    }
    lexicon.pairs = std::move(kept);
    return lexicon;
}

Lexicon lexicon_union(const Lexicon &a, const Lexicon &b) {
    Lexicon out{a.src_lang, a.tgt_lang, a.pairs};
    out.pairs.insert(out.pairs.end(), b.pairs.begin(), b.pairs.end());
    return deduplicated(std::move(out));
}

void check_lexicon(const Lexicon &lexicon, std::size_t n_src, std::size_t n_tgt) {
    std::unordered_set<std::uint64_t> seen;
    for (const auto &[s, t] : lexicon.pairs) {
        if (s >= n_src || t >= n_tgt) {
            fail(ErrorKind::Input, "lexicon " + lexicon.src_lang + "-" + lexicon.tgt_lang + ": pair (" +
                                       std::to_string(s) + ", " + std::to_string(t) + ") out of range");
        }
        if (!seen.insert(pair_key({s, t})).second) {
            fail(ErrorKind::Input, "lexicon " + lexicon.src_lang + "-" + lexicon.tgt_lang + ": duplicate pair (" +
                                       std::to_string(s) + ", " + std::to_string(t) + ")");
        }
    }
}

std::vector<WordPair> to_words(const Lexicon &lexicon, const EmbeddingMatrix &src,
                               const EmbeddingMatrix &tgt) {
    check_lexicon(lexicon, src.size(), tgt.size());
    std::vector<WordPair> out;
    out.reserve(lexicon.size());
    for (const auto &[s, t] : lexicon.pairs) out.emplace_back(src.vocab()[s], tgt.vocab()[t]);
    return out;
}

IndexedLexicon to_indices(const std::vector<WordPair> &pairs, const EmbeddingMatrix &src,
                          const EmbeddingMatrix &tgt) {
    IndexedLexicon out;
    out.lexicon.src_lang = src.lang();
    out.lexicon.tgt_lang = tgt.lang();
    for (const auto &[a, b] : pairs) {
        auto s = src.index_of(a);
        auto t = tgt.index_of(b);
        if (!s || !t) {
            ++out.skipped;
            continue;
        }
        out.lexicon.pairs.emplace_back(*s, *t);
    }
    out.lexicon = deduplicated(std::move(out.lexicon));
    return out;
}

std::vector<WordPair> read_word_pairs(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open lexicon: " + path.string());
    std::vector<WordPair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
        if (line.empty()) continue;
        auto sep = line.find_first_of(" \t");
        if (sep == std::string::npos || sep == 0) {
            fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": expected '<src> <tgt>'");
        }
        auto rest = line.find_first_not_of(" \t", sep);
        std::string tgt = line.substr(rest);
        if (tgt.find_first_of(" \t") != std::string::npos) {
            fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": more than two fields");
        }
        out.emplace_back(line.substr(0, sep), std::move(tgt));
    }
    return out;
}

void write_word_pairs(const std::vector<WordPair> &pairs, const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write lexicon: " + path.string());
    for (const auto &[a, b] : pairs) out << a << ' ' << b << '\n';
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

double OrthogonalMap::orthogonality_error() const {
    const Eigen::Index d = matrix.cols();
    return (matrix.transpose() * matrix - Eigen::MatrixXd::Identity(d, d)).norm();
}

OrthogonalMap solve_procrustes(const Matrix &x_sel, const Matrix &z_sel) {
    if (x_sel.rows() == 0) fail(ErrorKind::Input, "Procrustes needs at least one pair");
    if (x_sel.rows() != z_sel.rows() || x_sel.cols() != z_sel.cols()) {
        fail(ErrorKind::Input, "Procrustes dimension mismatch: " + std::to_string(x_sel.rows()) + "x" +
                                   std::to_string(x_sel.cols()) + " vs " + std::to_string(z_sel.rows()) + "x" +
                                   std::to_string(z_sel.cols()));
    }
    if (!x_sel.allFinite() || !z_sel.allFinite()) fail(ErrorKind::Numeric, "Procrustes input is not finite");

    Eigen::MatrixXd cross = x_sel.transpose() * z_sel;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return {svd.matrixV() * svd.matrixU().transpose()};
}

OrthogonalMap solve_procrustes(const Lexicon &lexicon, const Matrix &x, const Matrix &z) {
    check_lexicon(lexicon, static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(z.rows()));
    if (lexicon.empty()) fail(ErrorKind::Input, "Procrustes needs a non-empty lexicon");
    if (x.cols() != z.cols()) fail(ErrorKind::Input, "Procrustes dimension mismatch");
    // Accumulate X^T Z over pairs directly instead of gathering rows.
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(x.cols(), z.cols());
    for (const auto &[s, t] : lexicon.pairs) {
        cross.noalias() += x.row(as_index(s)).transpose() * z.row(as_index(t));
    }
    if (!cross.allFinite()) fail(ErrorKind::Numeric, "Procrustes input is not finite");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return {svd.matrixV() * svd.matrixU().transpose()};
}

std::string Retrieval::describe() const {
    return kind == Kind::NearestNeighbor ? "nn" : "csls(" + std::to_string(k) + ")";
}

Retrieval parse_retrieval(const std::string &text) {
    if (text == "nn") return Retrieval::nn();
    if (text == "csls") return Retrieval::csls();
    if (text.rfind("csls(", 0) == 0 && text.back() == ')') {
        const std::string inner = text.substr(5, text.size() - 6);
        std::size_t used = 0;
        long k = 0;
        try {
            k = std::stol(inner, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used == inner.size() && k > 0) return Retrieval::csls(static_cast<std::size_t>(k));
    }
    fail(ErrorKind::Input, "unknown retrieval '" + text + "' (expected nn, csls or csls(k))");
}

Direction parse_direction(const std::string &text) {
    if (text == "fwd" || text == "forward") return Direction::Forward;
    if (text == "bwd" || text == "backward") return Direction::Backward;
    if (text == "union") return Direction::Union;
    fail(ErrorKind::Input, "unknown direction '" + text + "' (expected fwd, bwd or union)");
}

void check_unit_rows(const Matrix &m, const char *what, double tol) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double norm = m.row(i).norm();
        if (!(std::abs(norm - 1.0) <= tol)) {
            fail(ErrorKind::Input, std::string(what) + ": row " + std::to_string(i) +
                                       " is not unit-norm (norm " + std::to_string(norm) + ")");
        }
    }
}

Vector mean_topk_similarity(const Matrix &queries, const Matrix &keys, std::size_t k, std::size_t block_rows) {
    if (k == 0 || k > static_cast<std::size_t>(keys.rows())) {
        fail(ErrorKind::Input, "neighbourhood size k=" + std::to_string(k) + " out of range [1, " +
                                   std::to_string(keys.rows()) + "]");
    }
    Vector out(queries.rows());
    std::vector<double> row;
    const auto kth = static_cast<std::ptrdiff_t>(k) - 1;
    for_each_block(queries, keys, block_rows, [&](Eigen::Index start, const Matrix &block) {
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            row.assign(block.row(r).data(), block.row(r).data() + block.cols());
            std::nth_element(row.begin(), row.begin() + kth, row.end(), std::greater<>());
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += row[j];
            out(start + r) = sum / static_cast<double>(k);
        }
    });
    return out;
}

Matrix csls_scores(const Matrix &mapped_src, const Matrix &tgt, std::size_t k, std::size_t block_rows) {
    if (mapped_src.cols() != tgt.cols()) fail(ErrorKind::Input, "CSLS dimension mismatch");
    const auto limit = static_cast<std::size_t>(std::min(mapped_src.rows(), tgt.rows()));
    if (k == 0 || k > limit) {
        fail(ErrorKind::Input, "CSLS k=" + std::to_string(k) + " out of range [1, " + std::to_string(limit) + "]");
    }
    check_unit_rows(mapped_src, "CSLS source");
    check_unit_rows(tgt, "CSLS target");
    const Vector r_tgt = mean_topk_similarity(mapped_src, tgt, k, block_rows);
    const Vector r_src = mean_topk_similarity(tgt, mapped_src, k, block_rows);
    Matrix out(mapped_src.rows(), tgt.rows());
    for_each_block(mapped_src, tgt, block_rows, [&](Eigen::Index start, const Matrix &block) {
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            out.row(start + r) = 2.0 * block.row(r) - r_src.transpose();
            out.row(start + r).array() -= r_tgt(start + r);
        }
    });
    return out;
}

Lexicon induce_lexicon(const Matrix &mapped_src, const Matrix &tgt, const Retrieval &retrieval,
                       Direction direction, std::size_t block_rows) {
    if (mapped_src.rows() == 0 || tgt.rows() == 0) fail(ErrorKind::Input, "cannot induce a lexicon from an empty vocabulary");
    if (mapped_src.cols() != tgt.cols()) fail(ErrorKind::Input, "induction dimension mismatch");

    const bool csls = retrieval.kind == Retrieval::Kind::Csls;
    Vector r_tgt;
    Vector r_src;
    if (csls) {
        const auto limit = static_cast<std::size_t>(std::min(mapped_src.rows(), tgt.rows()));
        if (retrieval.k == 0 || retrieval.k > limit) {
            fail(ErrorKind::Input, "CSLS k=" + std::to_string(retrieval.k) + " out of range [1, " +
                                       std::to_string(limit) + "]");
        }
        r_tgt = mean_topk_similarity(mapped_src, tgt, retrieval.k, block_rows);
        r_src = mean_topk_similarity(tgt, mapped_src, retrieval.k, block_rows);
    }

    const bool want_fwd = direction != Direction::Backward;
    const bool want_bwd = direction != Direction::Forward;
    const Eigen::Index n_tgt = tgt.rows();

    std::vector<IndexPair> fwd;
    std::vector<double> col_best(static_cast<std::size_t>(n_tgt), -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> col_arg(static_cast<std::size_t>(n_tgt), 0);

    Vector scores(n_tgt);
    for_each_block(mapped_src, tgt, block_rows, [&](Eigen::Index start, const Matrix &block) {
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            const Eigen::Index i = start + r;
            if (csls) {
                scores = 2.0 * block.row(r).transpose() - r_src;
                scores.array() -= r_tgt(i);
            } else {
                scores = block.row(r).transpose();
            }
            if (want_fwd) {
                Eigen::Index best = 0;
                for (Eigen::Index j = 1; j < n_tgt; ++j) {
                    if (scores(j) > scores(best)) best = j;
                }
                fwd.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(best));
            }
            if (want_bwd) {
                for (Eigen::Index j = 0; j < n_tgt; ++j) {
                    const auto col = static_cast<std::size_t>(j);
                    if (scores(j) > col_best[col]) {
                        col_best[col] = scores(j);
                        col_arg[col] = static_cast<std::size_t>(i);
                    }
                }
            }
        }
    });

    Lexicon out;
    out.pairs = std::move(fwd);
    if (want_bwd) {
        for (Eigen::Index j = 0; j < n_tgt; ++j) {
            out.pairs.emplace_back(col_arg[static_cast<std::size_t>(j)], static_cast<std::size_t>(j));
        }
    }
    return deduplicated(std::move(out));
}

Lexicon induce_lexicon(const OrthogonalMap &w, const EmbeddingMatrix &x, const EmbeddingMatrix &z,
                       const Retrieval &retrieval, Direction direction, std::size_t block_rows) {
    if (w.matrix.rows() != static_cast<Eigen::Index>(x.dim()) || x.dim() != z.dim()) {
        fail(ErrorKind::Input, "mapping dimension does not match the embeddings");
    }
    Lexicon out = induce_lexicon(w.apply(x.vectors()), z.vectors(), retrieval, direction, block_rows);
    out.src_lang = x.lang();
    out.tgt_lang = z.lang();
    return out;
}

double mean_pair_cosine(const Lexicon &lexicon, const Matrix &mapped_src, const Matrix &tgt) {
    if (lexicon.empty()) return 0.0;
    double sum = 0.0;
    for (const auto &[s, t] : lexicon.pairs) {
        const auto a = mapped_src.row(as_index(s));
        const auto b = tgt.row(as_index(t));
        sum += a.dot(b) / (a.norm() * b.norm());
    }
    return sum / static_cast<double>(lexicon.size());
}

}  // namespace umml
