#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "test_util.hpp"
#include "umml/align_selflearn.hpp"
#include "umml/error.hpp"
#include "umml/synthetic.hpp"

using namespace umml;

namespace {

double agreement(const Lexicon &lex, const Lexicon &gold) {
    std::set<IndexPair> found(lex.pairs.begin(), lex.pairs.end());
    std::size_t hit = 0;
    for (const auto &p : gold.pairs) hit += found.count(p);
    return static_cast<double>(hit) / static_cast<double>(gold.size());
}

// Fraction of source rows whose single forward translation in `lex` is the
// planted one. Rows with several candidates count only if all agree.
double forward_precision(const Lexicon &lex, const Lexicon &gold) {
    std::map<std::size_t, std::set<std::size_t>> out;
    for (const auto &[s, t] : lex.pairs) out[s].insert(t);
    std::size_t hit = 0;
    for (const auto &[s, t] : gold.pairs) {
        auto it = out.find(s);
        if (it != out.end() && it->second == std::set<std::size_t>{t}) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(gold.size());
}

std::vector<PlantedLanguage> planted_pair(std::size_t n, std::size_t d, double noise, std::uint64_t seed) {
    PlantedSpec spec;
    spec.n = n;
    spec.d = d;
    spec.noise = noise;
    spec.seed = seed;
    auto family = make_planted_family({"src", "tgt"}, spec);
    for (auto &l : family) l.embeddings = normalize(l.embeddings, default_normalization());
    return family;
}

}  // namespace

TEST_CASE("identical embeddings seed the identity") {
    std::mt19937_64 rng(31);
    const auto x = normalize(testutil::embedding("x", testutil::gaussian(120, 12, rng)), default_normalization());
    const Lexicon seed = init_unsupervised(x, x, 120);
    std::set<IndexPair> pairs(seed.pairs.begin(), seed.pairs.end());
    for (std::size_t i = 0; i < 120; ++i) CHECK(pairs.count({i, i}) == 1);
    CHECK(seed.size() == 120);
}

TEST_CASE("a row-permuted copy seeds its permutation") {
    std::mt19937_64 rng(32);
    const std::size_t n = 200, d = 20;
    const Matrix x = testutil::unit_rows(testutil::gaussian(n, d, rng));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix z(n, d);
    for (std::size_t i = 0; i < n; ++i) z.row(static_cast<Eigen::Index>(perm[i])) = x.row(static_cast<Eigen::Index>(i));

    const Lexicon seed = init_unsupervised(testutil::embedding("x", x), testutil::embedding("z", z), n);
    std::set<IndexPair> expected;
    for (std::size_t i = 0; i < n; ++i) expected.emplace(i, perm[i]);
    CHECK(std::set<IndexPair>(seed.pairs.begin(), seed.pairs.end()) == expected);
}

TEST_CASE("duplicated rows may share a translation") {
    std::mt19937_64 rng(33);
    Matrix x = testutil::unit_rows(testutil::gaussian(30, 6, rng));
    x.row(7) = x.row(3);
    const auto ex = testutil::embedding("x", x);
    Lexicon seed;
    CHECK_NOTHROW(seed = init_unsupervised(ex, ex, 30));
    CHECK_NOTHROW(check_lexicon(seed, 30, 30));
    std::set<std::size_t> targets_of_dupes;
    for (const auto &[s, t] : seed.pairs) {
        if (s == 3 || s == 7) targets_of_dupes.insert(t);
    }
    CHECK_FALSE(targets_of_dupes.empty());
}

TEST_CASE("init vocabulary larger than a language is an error") {
    std::mt19937_64 rng(34);
    const auto x = testutil::embedding("x", testutil::unit_rows(testutil::gaussian(10, 4, rng)));
    CHECK_THROWS_AS(init_unsupervised(x, x, 11), Error);
    CHECK_THROWS_AS(init_unsupervised(x, x, 0), Error);
}

TEST_CASE("one iteration with no dropout is one Procrustes and induction round") {
    const auto family = planted_pair(300, 16, 0.05, 35);
    const auto &x = family[0].embeddings;
    const auto &z = family[1].embeddings;
    SelfLearnConfig cfg;
    cfg.keep_prob_start = 1.0;
    cfg.max_iters = 1;
    cfg.init_vocab = 300;
    const SelfLearnResult r = self_learn(x, z, cfg);

    const Lexicon seed = init_unsupervised(x, z, 300);
    CHECK(r.seed.pairs == seed.pairs);
    const OrthogonalMap w = solve_procrustes(seed, x.vectors(), z.vectors());
    const Lexicon manual = induce_lexicon(w, x, z, cfg.retrieval, cfg.direction);
    CHECK(r.lexicon.pairs == manual.pairs);
    REQUIRE(r.history.size() == 1);
    CHECK(r.history[0].keep_prob == 1.0);
}

TEST_CASE("noise-free planted rotation is recovered") {
    const auto family = planted_pair(2000, 50, 0.0, 36);
    SelfLearnConfig cfg;
    cfg.seed = 7;
    const SelfLearnResult r = self_learn(family[0].embeddings, family[1].embeddings, cfg);
    const Lexicon gold = planted_gold(family[0], family[1]);
    CHECK(forward_precision(r.lexicon, gold) >= 0.99);
    CHECK(agreement(r.lexicon, gold) >= 0.99);
    CHECK_NOTHROW(check_lexicon(r.lexicon, 2000, 2000));

    double best = -1.0;
    for (const auto &step : r.history) {
        REQUIRE(std::isfinite(step.objective));
        best = std::max(best, step.objective);
        CHECK(step.keep_prob > 0.0);
        CHECK(step.keep_prob <= 1.0);
    }
    CHECK(r.history.back().keep_prob == 1.0);
}

TEST_CASE("keep probability follows the stall schedule") {
    const auto family = planted_pair(400, 20, 0.0, 37);
    SelfLearnConfig cfg;
    cfg.stall_patience = 5;
    cfg.init_vocab = 400;
    const SelfLearnResult r = self_learn(family[0].embeddings, family[1].embeddings, cfg);
    std::vector<double> levels;
    for (const auto &s : r.history) {
        if (levels.empty() || levels.back() != s.keep_prob) levels.push_back(s.keep_prob);
    }
    CHECK(levels == std::vector<double>{0.1, 0.2, 0.4, 0.8, 1.0});
    CHECK(r.history.size() < cfg.max_iters);
}

TEST_CASE("runs are reproducible for a fixed seed") {
    const auto family = planted_pair(500, 20, 0.02, 38);
    SelfLearnConfig cfg;
    cfg.seed = 99;
    cfg.stall_patience = 10;
    const auto a = self_learn(family[0].embeddings, family[1].embeddings, cfg);
    const auto b = self_learn(family[0].embeddings, family[1].embeddings, cfg);
    CHECK(a.lexicon.pairs == b.lexicon.pairs);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].objective == b.history[i].objective);
}

TEST_CASE("config validation") {
    SelfLearnConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.keep_prob_start = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.keep_prob_growth = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.max_iters = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}
