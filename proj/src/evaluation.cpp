#include "umml/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "umml/error.hpp"

namespace umml {

BliResult eval_bli(const EmbeddingMatrix &src_latent, const EmbeddingMatrix &tgt_latent,
                   const std::vector<WordPair> &gold, const std::vector<std::size_t> &ks,
                   const Retrieval &retrieval, std::size_t block_rows) {
    if (ks.empty()) fail(ErrorKind::Input, "BLI needs at least one k");
    if (src_latent.dim() != tgt_latent.dim()) fail(ErrorKind::Input, "BLI: latent dimensions differ");
    const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
    if (ks.end() != std::find(ks.begin(), ks.end(), std::size_t{0})) fail(ErrorKind::Input, "BLI: k must be positive");

    BliResult result;
    result.src_lang = src_latent.lang();
    result.tgt_lang = tgt_latent.lang();

    // Distinct source words in first-seen order, with their gold target rows.
    std::vector<std::string> words;
    std::unordered_map<std::string, std::vector<std::size_t>> targets;
    for (const auto &[s, t] : gold) {
        auto [it, fresh] = targets.try_emplace(s);
        if (fresh) words.push_back(s);
        if (auto row = tgt_latent.index_of(t)) {
            if (std::find(it->second.begin(), it->second.end(), *row) == it->second.end()) it->second.push_back(*row);
        }
    }
    std::vector<std::size_t> rows;
    std::vector<const std::vector<std::size_t> *> golds;
    for (const auto &w : words) {
        auto row = src_latent.index_of(w);
        const auto &g = targets.at(w);
        if (!row || g.empty()) {
            ++result.oov_count;
            continue;
        }
        rows.push_back(*row);
        golds.push_back(&g);
    }
    result.evaluated_count = rows.size();
    if (rows.empty()) fail(ErrorKind::Input, "BLI: every test word is out of vocabulary");

    const Matrix &src = src_latent.vectors();
    const Matrix &tgt = tgt_latent.vectors();
    const Eigen::Index n_tgt = tgt.rows();
    const std::size_t depth = std::min<std::size_t>(max_k, static_cast<std::size_t>(n_tgt));

    Vector r_src;  // per target: mean top-k similarity to all source words
    const bool csls = retrieval.kind == Retrieval::Kind::Csls;
    if (csls) {
        const auto limit = static_cast<std::size_t>(std::min(src.rows(), tgt.rows()));
        if (retrieval.k == 0 || retrieval.k > limit) {
            fail(ErrorKind::Input, "BLI: CSLS k=" + std::to_string(retrieval.k) + " out of range [1, " +
                                       std::to_string(limit) + "]");
        }
        r_src = mean_topk_similarity(tgt, src, retrieval.k, block_rows);
    }

    std::map<std::size_t, std::size_t> hits;
    for (std::size_t k : ks) hits[k] = 0;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_tgt));
    Matrix queries(static_cast<Eigen::Index>(std::min(block_rows, rows.size())), src.cols());
    for (std::size_t start = 0; start < rows.size(); start += block_rows) {
        const std::size_t count = std::min(block_rows, rows.size() - start);
        queries.resize(static_cast<Eigen::Index>(count), src.cols());
        for (std::size_t r = 0; r < count; ++r) queries.row(static_cast<Eigen::Index>(r)) = src.row(static_cast<Eigen::Index>(rows[start + r]));
        Matrix scores = queries * tgt.transpose();
        if (csls) {
            const Vector r_tgt = mean_topk_similarity(queries, tgt, retrieval.k, block_rows);
            for (Eigen::Index r = 0; r < scores.rows(); ++r) {
                scores.row(r) = 2.0 * scores.row(r) - r_src.transpose();
                scores.row(r).array() -= r_tgt(r);
            }
        }
        for (std::size_t r = 0; r < count; ++r) {
            const auto row = scores.row(static_cast<Eigen::Index>(r));
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth), order.end(),
                              [&](Eigen::Index a, Eigen::Index b) {
                                  return row(a) > row(b) || (row(a) == row(b) && a < b);
                              });
            const auto &g = *golds[start + r];
            std::size_t first_hit = depth + 1;
            for (std::size_t rank = 0; rank < depth; ++rank) {
                if (std::find(g.begin(), g.end(), static_cast<std::size_t>(order[rank])) != g.end()) {
                    first_hit = rank + 1;
                    break;
                }
            }
            for (auto &[k, h] : hits) {
                if (first_hit <= k) ++h;
            }
        }
    }
    for (const auto &[k, h] : hits) {
        result.precision_at[k] = static_cast<double>(h) / static_cast<double>(result.evaluated_count);
    }
    return result;
}

std::vector<double> average_ranks(const std::vector<double> &values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double> &a, const std::vector<double> &b) {
    if (a.size() != b.size()) fail(ErrorKind::Input, "Spearman: inputs differ in length");
    if (a.size() < 2) fail(ErrorKind::Input, "Spearman needs at least two pairs");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - mean) * (rb[i] - mean);
        va += (ra[i] - mean) * (ra[i] - mean);
        vb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (va == 0.0 || vb == 0.0) fail(ErrorKind::Numeric, "Spearman undefined: one side is constant");
    return cov / std::sqrt(va * vb);
}

ClwsResult eval_clws(const EmbeddingMatrix &latent_a, const EmbeddingMatrix &latent_b,
                     const std::vector<ScoredPair> &gold) {
    ClwsResult result;
    std::vector<double> predicted;
    std::vector<double> expected;
    for (const auto &p : gold) {
        auto ia = latent_a.index_of(p.a);
        auto ib = latent_b.index_of(p.b);
        if (!ia || !ib) {
            ++result.oov;
            continue;
        }
        const auto va = latent_a.vectors().row(static_cast<Eigen::Index>(*ia));
        const auto vb = latent_b.vectors().row(static_cast<Eigen::Index>(*ib));
        predicted.push_back(va.dot(vb) / (va.norm() * vb.norm()));
        expected.push_back(p.score);
    }
    result.used = predicted.size();
    if (result.used < 2) {
        fail(ErrorKind::Input, "CLWS: only " + std::to_string(result.used) + " in-vocabulary pairs");
    }
    result.rho = spearman(predicted, expected);
    return result;
}

std::vector<ScoredPair> read_scored_pairs(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open similarity file: " + path.string());
    std::vector<ScoredPair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        ScoredPair p;
        std::string score;
        if (!(fields >> p.a)) continue;
        std::string extra;
        if (!(fields >> p.b >> score) || (fields >> extra)) {
            fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": expected 'word_a word_b score'");
        }
        try {
            std::size_t used = 0;
            p.score = std::stod(score, &used);
            if (used != score.size()) throw std::invalid_argument(score);
        } catch (const std::exception &) {
            fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": bad score '" + score + "'");
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<WordPair> construct_pivot_testset(const std::vector<WordPair> &a_to_pivot,
                                              const std::vector<WordPair> &pivot_to_b) {
    std::unordered_map<std::string, std::vector<std::string>> from_pivot;
    for (const auto &[p, b] : pivot_to_b) from_pivot[p].push_back(b);
    std::set<WordPair> seen;
    std::vector<WordPair> out;
    for (const auto &[a, p] : a_to_pivot) {
        auto it = from_pivot.find(p);
        if (it == from_pivot.end()) continue;
        for (const auto &b : it->second) {
            if (seen.emplace(a, b).second) out.emplace_back(a, b);
        }
    }
    if (out.empty()) fail(ErrorKind::Input, "pivot dictionaries do not intersect");
    return out;
}

Lexicon construct_pivot_testset(const Lexicon &a_to_pivot, const Lexicon &pivot_to_b) {
    if (a_to_pivot.tgt_lang != pivot_to_b.src_lang) {
        fail(ErrorKind::Input, "pivot language mismatch: " + a_to_pivot.tgt_lang + " vs " + pivot_to_b.src_lang);
    }
    std::unordered_map<std::size_t, std::vector<std::size_t>> from_pivot;
    for (const auto &[p, b] : pivot_to_b.pairs) from_pivot[p].push_back(b);
    Lexicon out{a_to_pivot.src_lang, pivot_to_b.tgt_lang, {}};
    for (const auto &[a, p] : a_to_pivot.pairs) {
        auto it = from_pivot.find(p);
        if (it == from_pivot.end()) continue;
        for (std::size_t b : it->second) out.pairs.emplace_back(a, b);
    }
    out = deduplicated(std::move(out));
    if (out.empty()) fail(ErrorKind::Input, "pivot dictionaries do not intersect");
    return out;
}

std::string format_bli_table(const std::vector<BliResult> &results) {
    std::set<std::size_t> ks;
    for (const auto &r : results) {
        for (const auto &[k, p] : r.precision_at) ks.insert(k);
    }
    std::ostringstream out;
    out << std::left << std::setw(6) << "src" << std::setw(6) << "tgt";
    for (std::size_t k : ks) out << std::right << std::setw(9) << ("P@" + std::to_string(k));
    out << std::setw(9) << "n" << std::setw(7) << "oov" << '\n';
    out << std::fixed << std::setprecision(1);
    for (const auto &r : results) {
        out << std::left << std::setw(6) << r.src_lang << std::setw(6) << r.tgt_lang << std::right;
        for (std::size_t k : ks) {
            auto it = r.precision_at.find(k);
            if (it == r.precision_at.end()) out << std::setw(9) << "-";
            else out << std::setw(9) << 100.0 * it->second;
        }
        out << std::setw(9) << r.evaluated_count << std::setw(7) << r.oov_count << '\n';
    }
    return out.str();
}

}  // namespace umml
