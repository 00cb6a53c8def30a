#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "umml/align_core.hpp"
#include "umml/error.hpp"
#include "umml/synthetic.hpp"

using namespace umml;
using testutil::gaussian;
using testutil::unit_rows;

namespace {

double procrustes_loss(const Matrix &w, const Matrix &x, const Matrix &z) { return (x * w.transpose() - z).squaredNorm(); }

// Mean of the k largest entries of each row of s, by full sort.
Vector naive_topk_mean(const Matrix &s, std::size_t k) {
    Vector out(s.rows());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        std::vector<double> row(s.row(i).data(), s.row(i).data() + s.cols());
        std::sort(row.begin(), row.end(), std::greater<>());
        out(i) = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / static_cast<double>(k);
    }
    return out;
}

// Direct triple loop: cosines, neighbourhood means, then the score.
Matrix naive_csls(const Matrix &src, const Matrix &tgt, std::size_t k) {
    Matrix cos(src.rows(), tgt.rows());
    for (Eigen::Index i = 0; i < src.rows(); ++i) {
        for (Eigen::Index j = 0; j < tgt.rows(); ++j) {
            double s = 0.0;
            for (Eigen::Index t = 0; t < src.cols(); ++t) s += src(i, t) * tgt(j, t);
            cos(i, j) = s;
        }
    }
    const Vector r_t = naive_topk_mean(cos, k);
    const Vector r_s = naive_topk_mean(cos.transpose(), k);
    Matrix out(src.rows(), tgt.rows());
    for (Eigen::Index i = 0; i < src.rows(); ++i) {
        for (Eigen::Index j = 0; j < tgt.rows(); ++j) out(i, j) = 2.0 * cos(i, j) - r_t(i) - r_s(j);
    }
    return out;
}

// Points on a great circle at equal spacing, offset by `phase`, embedded in
// d dimensions by a fixed rotation. Every row has the same neighbour profile.
Matrix circle(std::size_t n, double phase, const Eigen::MatrixXd &rot) {
    Matrix pts = Matrix::Zero(static_cast<Eigen::Index>(n), rot.rows());
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n) + phase;
        pts(static_cast<Eigen::Index>(i), 0) = std::cos(a);
        pts(static_cast<Eigen::Index>(i), 1) = std::sin(a);
    }
    return pts * rot.transpose();
}

}  // namespace

TEST_CASE("Procrustes on identical inputs is the identity") {
    std::mt19937_64 rng(11);
    const Matrix x = gaussian(30, 8, rng);
    const auto w = solve_procrustes(x, x);
    CHECK((w.matrix - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("Procrustes recovers a planted rotation or reflection") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 3 + static_cast<std::size_t>(trial % 10);
        const Eigen::MatrixXd r = random_orthogonal(d, rng);
        const Matrix x = gaussian(static_cast<Eigen::Index>(d + 5), static_cast<Eigen::Index>(d), rng);
        const Matrix z = x * r.transpose();
        const auto w = solve_procrustes(x, z);
        CHECK((w.matrix - r).norm() < 1e-6);
        CHECK(w.orthogonality_error() <= 1e-8 * static_cast<double>(d));
    }
}

TEST_CASE("Procrustes beats sampled orthogonal matrices") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x = gaussian(20, 5, rng);
        const Matrix z = gaussian(20, 5, rng);
        const auto w = solve_procrustes(x, z);
        const double best = procrustes_loss(w.matrix, x, z);
        CHECK(best <= procrustes_loss(Matrix::Identity(5, 5), x, z) + 1e-12);
        for (int s = 0; s < 1000; ++s) {
            const Matrix q = random_orthogonal(5, rng);
            REQUIRE(best <= procrustes_loss(q, x, z) + 1e-12);
        }
    }
}

TEST_CASE("Procrustes over a lexicon equals Procrustes over the selected rows") {
    std::mt19937_64 rng(14);
    const Matrix x = gaussian(12, 4, rng);
    const Matrix z = gaussian(9, 4, rng);
    const Lexicon lex{"a", "b", {{0, 3}, {5, 1}, {7, 7}, {11, 0}, {2, 8}, {2, 3}}};
    Matrix xs(6, 4), zs(6, 4);
    for (std::size_t p = 0; p < lex.pairs.size(); ++p) {
        xs.row(static_cast<Eigen::Index>(p)) = x.row(static_cast<Eigen::Index>(lex.pairs[p].first));
        zs.row(static_cast<Eigen::Index>(p)) = z.row(static_cast<Eigen::Index>(lex.pairs[p].second));
    }
    CHECK((solve_procrustes(lex, x, z).matrix - solve_procrustes(xs, zs).matrix).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(solve_procrustes(Lexicon{"a", "b", {}}, x, z), Error);
}

TEST_CASE("CSLS with constant similarity is zero") {
    std::mt19937_64 rng(15);
    const Matrix u = unit_rows(gaussian(1, 6, rng));
    const Matrix v = unit_rows(gaussian(1, 6, rng));
    const Matrix src = u.replicate(4, 1);
    const Matrix tgt = v.replicate(5, 1);
    CHECK(csls_scores(src, tgt, 3).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("CSLS on the 2x2 identity cosine matrix") {
    const Matrix e = Matrix::Identity(2, 2);
    Matrix expected(2, 2);
    expected << 0, -2, -2, 0;
    CHECK((csls_scores(e, e, 1) - expected).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((naive_csls(e, e, 1) - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("k = n_t gives the full row mean") {
    std::mt19937_64 rng(16);
    const Matrix src = unit_rows(gaussian(5, 4, rng));
    const Matrix tgt = unit_rows(gaussian(7, 4, rng));
    const Vector r = mean_topk_similarity(src, tgt, 7);
    const Vector direct = (src * tgt.transpose()).rowwise().mean();
    CHECK((r - direct).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("blockwise CSLS matches the brute force") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> size(2, 50);
    for (int trial = 0; trial < 30; ++trial) {
        const int ns = size(rng), nt = size(rng);
        const std::size_t k = 1 + static_cast<std::size_t>(trial) % static_cast<std::size_t>(std::min(ns, nt));
        const Matrix src = unit_rows(gaussian(ns, 6, rng));
        const Matrix tgt = unit_rows(gaussian(nt, 6, rng));
        const Matrix oracle = naive_csls(src, tgt, k);
        for (std::size_t block : {std::size_t{1}, std::size_t{7}, kDefaultBlockRows}) {
            REQUIRE((csls_scores(src, tgt, k, block) - oracle).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
}

TEST_CASE("CSLS input checks") {
    std::mt19937_64 rng(18);
    const Matrix src = unit_rows(gaussian(4, 3, rng));
    const Matrix tgt = unit_rows(gaussian(6, 3, rng));
    CHECK_THROWS_AS(csls_scores(src, tgt, 0), Error);
    CHECK_THROWS_AS(csls_scores(src, tgt, 5), Error);
    CHECK_THROWS_AS(csls_scores(src * 2.0, tgt, 2), Error);
}

TEST_CASE("self-alignment induces the identity lexicon") {
    std::mt19937_64 rng(19);
    const auto x = testutil::embedding("x", unit_rows(gaussian(40, 10, rng)));
    const OrthogonalMap id{Matrix::Identity(10, 10)};
    for (auto dir : {Direction::Forward, Direction::Backward, Direction::Union}) {
        const Lexicon lex = induce_lexicon(id, x, x, Retrieval::nn(), dir);
        REQUIRE(lex.size() == 40);
        for (std::size_t i = 0; i < 40; ++i) {
            // Backward pairs are listed by target; every pair is (i, i).
            CHECK(lex.pairs[i].first == lex.pairs[i].second);
        }
    }
}

TEST_CASE("planted rotation is recovered by one Procrustes and induction") {
    std::mt19937_64 rng(20);
    const std::size_t n = 200, d = 20;
    const Eigen::MatrixXd r = random_orthogonal(d, rng);
    const Matrix x = unit_rows(gaussian(n, d, rng));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix z(n, d);
    for (std::size_t i = 0; i < n; ++i) z.row(static_cast<Eigen::Index>(perm[i])) = x.row(static_cast<Eigen::Index>(i)) * r.transpose();
    const auto ex = testutil::embedding("x", x);
    const auto ez = testutil::embedding("z", z);

    Lexicon seed{"x", "z", {}};
    for (std::size_t i = 0; i < 2 * d; ++i) seed.pairs.emplace_back(i, perm[i]);
    const OrthogonalMap w = solve_procrustes(seed, x, z);
    CHECK((w.matrix - r).norm() < 1e-6);
    for (auto ret : {Retrieval::nn(), Retrieval::csls(10)}) {
        const Lexicon fwd = induce_lexicon(w, ex, ez, ret, Direction::Forward);
        REQUIRE(fwd.size() == n);
        for (std::size_t i = 0; i < n; ++i) CHECK(fwd.pairs[i] == IndexPair{i, perm[i]});
        CHECK(induce_lexicon(w, ex, ez, ret, Direction::Union).size() == n);
    }
}

TEST_CASE("nn and CSLS agree when neighbourhood densities are constant") {
    std::mt19937_64 rng(21);
    const Eigen::MatrixXd rot = random_orthogonal(5, rng);
    const Matrix src = circle(9, 0.13, rot);
    const Matrix tgt = circle(9, 0.0, rot);
    for (auto dir : {Direction::Forward, Direction::Backward, Direction::Union}) {
        const Lexicon a = induce_lexicon(src, tgt, Retrieval::nn(), dir);
        const Lexicon b = induce_lexicon(src, tgt, Retrieval::csls(3), dir);
        CHECK(a.pairs == b.pairs);
    }
}

TEST_CASE("ties go to the lowest index") {
    Matrix src(1, 2);
    src << 1, 0;
    Matrix tgt(3, 2);
    tgt << 0, 1, 1, 0, 1, 0;
    const Lexicon lex = induce_lexicon(src, tgt, Retrieval::nn(), Direction::Forward);
    REQUIRE(lex.size() == 1);
    CHECK(lex.pairs[0] == IndexPair{0, 1});
}

TEST_CASE("lexicon union keeps order and drops repeats") {
    const Lexicon fwd{"a", "b", {{0, 1}}};
    const Lexicon bwd{"a", "b", {{1, 0}, {0, 1}}};
    const Lexicon u = lexicon_union(fwd, bwd);
    CHECK(u.pairs == std::vector<IndexPair>{{0, 1}, {1, 0}});
    CHECK(deduplicated(Lexicon{"a", "b", {{2, 2}, {1, 1}, {2, 2}}}).pairs == std::vector<IndexPair>{{2, 2}, {1, 1}});
}

TEST_CASE("lexicon invariants") {
    CHECK_NOTHROW(check_lexicon(Lexicon{"a", "b", {{0, 1}, {0, 2}}}, 1, 3));
    CHECK_THROWS_AS(check_lexicon(Lexicon{"a", "b", {{0, 3}}}, 1, 3), Error);
    CHECK_THROWS_AS(check_lexicon(Lexicon{"a", "b", {{0, 1}, {0, 1}}}, 1, 3), Error);
}

TEST_CASE("word pairs round-trip and map to indices") {
    testutil::TempDir dir("pairs");
    testutil::write_text(dir / "d.txt", "a\tx\n\nb y\nq z\n");
    const auto pairs = read_word_pairs(dir / "d.txt");
    CHECK(pairs == std::vector<WordPair>{{"a", "x"}, {"b", "y"}, {"q", "z"}});
    write_word_pairs(pairs, dir / "e.txt");
    CHECK(read_word_pairs(dir / "e.txt") == pairs);

    const EmbeddingMatrix src("s", {"a", "b"}, Matrix::Identity(2, 2));
    const EmbeddingMatrix tgt("t", {"y", "x", "z"}, Matrix::Identity(3, 3).leftCols(2));
    const auto idx = to_indices(pairs, src, tgt);
    CHECK(idx.skipped == 1);
    CHECK(idx.lexicon.pairs == std::vector<IndexPair>{{0, 1}, {1, 0}});
    CHECK(to_words(idx.lexicon, src, tgt) == std::vector<WordPair>{{"a", "x"}, {"b", "y"}});
}

TEST_CASE("retrieval and direction parsing") {
    CHECK(parse_retrieval("nn").kind == Retrieval::Kind::NearestNeighbor);
    CHECK(parse_retrieval("csls").k == 10);
    CHECK(parse_retrieval("csls(4)").k == 4);
    CHECK(parse_retrieval(Retrieval::csls(7).describe()).k == 7);
    CHECK_THROWS_AS(parse_retrieval("csls(0)"), Error);
    CHECK_THROWS_AS(parse_retrieval("cosine"), Error);
    CHECK(parse_direction("union") == Direction::Union);
    CHECK(parse_direction("fwd") == Direction::Forward);
    CHECK(parse_direction("bwd") == Direction::Backward);
}
