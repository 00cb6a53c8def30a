#include "umml/geomm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <json.hpp>

#include "umml/error.hpp"
#include "umml/matrix_io.hpp"
#include "umml/synthetic.hpp"

namespace umml {

namespace {

using Mat = Eigen::MatrixXd;

// Second-order statistics of one lexicon; the edge loss only depends on
// these: tr(M Sxx M^T) - 2 tr(M Sxz) + szz.
struct EdgeTerm {
    std::size_t src = 0;
    std::size_t tgt = 0;
    Mat sxx;
    Mat sxz;
    double szz = 0.0;
};

struct State {
    std::vector<Mat> u;
    Mat b;
};

Mat composite(const State &s, const EdgeTerm &e) { return s.u[e.tgt] * s.b * s.u[e.src].transpose(); }

// A sum of squares; the expanded form can dip below zero by rounding.
double edge_loss(const EdgeTerm &e, const Mat &m) {
    return std::max(0.0, (m * e.sxx).cwiseProduct(m).sum() - 2.0 * m.cwiseProduct(e.sxz.transpose()).sum() + e.szz);
}

double total_loss(const std::vector<EdgeTerm> &edges, const State &s) {
    double loss = 0.0;
    for (const auto &e : edges) loss += edge_loss(e, composite(s, e));
    return loss;
}

// d(edge loss)/dM
Mat edge_grad(const EdgeTerm &e, const Mat &m) { return 2.0 * (m * e.sxx - e.sxz.transpose()); }

Mat skew(const Mat &a) { return 0.5 * (a - a.transpose()); }
Mat sym(const Mat &a) { return 0.5 * (a + a.transpose()); }

Mat polar(const Mat &a) {
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

Mat euclidean_grad_u(const std::vector<EdgeTerm> &edges, const State &s, std::size_t lang) {
    const Eigen::Index d = s.b.rows();
    Mat g = Mat::Zero(d, d);
    for (const auto &e : edges) {
        if (e.src != lang && e.tgt != lang) continue;
        const Mat gm = edge_grad(e, composite(s, e));
        if (e.tgt == lang) g += gm * s.u[e.src] * s.b;
        if (e.src == lang) g += gm.transpose() * s.u[e.tgt] * s.b;
    }
    return g;
}

Mat riemannian_grad_u(const std::vector<EdgeTerm> &edges, const State &s, std::size_t lang) {
    const Mat &u = s.u[lang];
    return u * skew(u.transpose() * euclidean_grad_u(edges, s, lang));
}

Mat grad_b(const std::vector<EdgeTerm> &edges, const State &s) {
    const Eigen::Index d = s.b.rows();
    Mat g = Mat::Zero(d, d);
    for (const auto &e : edges) g += s.u[e.tgt].transpose() * edge_grad(e, composite(s, e)) * s.u[e.src];
    return sym(g);
}

double grad_norm(const std::vector<EdgeTerm> &edges, const State &s) {
    double sq = grad_b(edges, s).squaredNorm();
    for (std::size_t l = 0; l < s.u.size(); ++l) sq += riemannian_grad_u(edges, s, l).squaredNorm();
    return std::sqrt(sq);
}

GeommStep describe(std::size_t iter, double loss, double gnorm, const State &s) {
    GeommStep step;
    step.iter = iter;
    step.loss = loss;
    step.grad_norm = gnorm;
    const Eigen::Index d = s.b.rows();
    for (const auto &u : s.u) {
        step.max_orth_error = std::max(step.max_orth_error, (u.transpose() * u - Mat::Identity(d, d)).norm());
    }
    SPDMetric b{s.b};
    step.b_asymmetry = b.asymmetry();
    step.b_min_eigenvalue = b.min_eigenvalue();
    return step;
}

std::size_t find_lexicon(const std::vector<Lexicon> &lexicons, const std::string &a, const std::string &b) {
    for (std::size_t i = 0; i < lexicons.size(); ++i) {
        const auto &lx = lexicons[i];
        if ((lx.src_lang == a && lx.tgt_lang == b) || (lx.src_lang == b && lx.tgt_lang == a)) return i;
    }
    fail(ErrorKind::Input, "no lexicon for edge " + a + "-" + b);
}

// Breadth-first over the graph: U_root = I and, across an edge whose
// lexicon maps s to t with Procrustes map W, U_t = W U_s (and U_s = W^T U_t).
void procrustes_init(State &s, const std::vector<std::string> &nodes, const std::vector<Lexicon> &lexicons,
                     const LanguageGraph &graph, const std::map<std::string, EmbeddingMatrix> &embeddings) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i]] = i;
    std::vector<bool> seen(nodes.size(), false);
    std::deque<std::size_t> queue{0};
    seen[0] = true;
    while (!queue.empty()) {
        const std::size_t cur = queue.front();
        queue.pop_front();
        for (const auto &edge : graph.edges) {
            std::string other;
            if (edge.a == nodes[cur]) other = edge.b;
            else if (edge.b == nodes[cur]) other = edge.a;
            else continue;
            const std::size_t next = pos.at(other);
            if (seen[next]) continue;
            const Lexicon &lx = lexicons[find_lexicon(lexicons, edge.a, edge.b)];
            const OrthogonalMap w =
                solve_procrustes(lx, embeddings.at(lx.src_lang).vectors(), embeddings.at(lx.tgt_lang).vectors());
            if (lx.src_lang == nodes[cur]) s.u[next] = w.matrix * s.u[cur];
            else s.u[next] = w.matrix.transpose() * s.u[cur];
            seen[next] = true;
            queue.push_back(next);
        }
    }
}

}  // namespace

EdgeSource parse_edge_source(const std::string &text) {
    if (text == "selflearn") return EdgeSource::SelfLearn;
    if (text == "gw") return EdgeSource::GW;
    if (text == "supplied") return EdgeSource::Supplied;
    fail(ErrorKind::Config, "unknown edge source '" + text + "' (expected selflearn, gw or supplied)");
}

std::string to_string(EdgeSource source) {
    switch (source) {
    case EdgeSource::SelfLearn: return "selflearn";
    case EdgeSource::GW: return "gw";
    case EdgeSource::Supplied: return "supplied";
    }
    return "unknown";
}

std::vector<std::string> LanguageGraph::violations() const {
    std::vector<std::string> out;
    if (nodes.empty()) {
        out.push_back("graph has no languages");
        return out;
    }
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!pos.emplace(nodes[i], i).second) out.push_back("language " + nodes[i] + " declared twice");
    }

    // Union-find over declared endpoints.
    std::vector<std::size_t> parent(nodes.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };

    std::set<std::pair<std::string, std::string>> seen;
    for (const auto &e : edges) {
        const std::string name = e.a + "-" + e.b;
        bool ok = true;
        for (const auto *end : {&e.a, &e.b}) {
            if (!pos.count(*end)) {
                out.push_back("edge " + name + ": unknown language " + *end);
                ok = false;
            }
        }
        if (e.a == e.b) {
            out.push_back("edge " + name + ": self-loop");
            ok = false;
        }
        if (!seen.insert(std::minmax(e.a, e.b)).second) {
            out.push_back("edge " + name + ": duplicate edge");
            ok = false;
        }
        if (e.source == EdgeSource::Supplied && e.lexicon_path.empty()) {
            out.push_back("edge " + name + ": supplied edge without a lexicon path");
        }
        if (ok) parent[find(pos.at(e.a))] = find(pos.at(e.b));
    }
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (find(i) != find(0)) out.push_back("language " + nodes[i] + " is unreachable from " + nodes[0]);
    }
    return out;
}

void LanguageGraph::validate() const {
    const auto problems = violations();
    if (problems.empty()) return;
    std::string msg = "invalid language graph:";
    for (const auto &p : problems) msg += "\n  " + p;
    fail(ErrorKind::Config, msg);
}

double SPDMetric::asymmetry() const { return (matrix - matrix.transpose()).norm(); }

double SPDMetric::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Mat> eig(sym(matrix), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

SPDMetric project_spd(const Mat &m, double floor) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(sym(m));
    // Reassembling V diag V^T perturbs eigenvalues by a few ulps of the
    // largest one, so clamp slightly above the floor to stay on its side.
    const double scale = eig.eigenvalues().cwiseAbs().maxCoeff();
    const double margin = 64.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(m.rows()) * scale;
    const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(floor + margin);
    const Mat &v = eig.eigenvectors();
    return {sym(v * values.asDiagonal() * v.transpose())};
}

Mat spd_sqrt(const SPDMetric &b) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(sym(b.matrix));
    const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Mat &v = eig.eigenvectors();
    return sym(v * roots.asDiagonal() * v.transpose());
}

MultilingualSpace::MultilingualSpace(std::map<std::string, OrthogonalMap> maps, SPDMetric metric)
    : maps_(std::move(maps)), metric_(std::move(metric)) {
    if (maps_.empty()) fail(ErrorKind::Input, "multilingual space without languages");
    const Eigen::Index d = metric_.matrix.rows();
    if (d == 0 || metric_.matrix.cols() != d) fail(ErrorKind::Input, "metric must be square and non-empty");
    for (const auto &[lang, u] : maps_) {
        if (u.matrix.rows() != d || u.matrix.cols() != d) {
            fail(ErrorKind::Input, "map for " + lang + " does not match the metric dimension");
        }
    }
    sqrt_metric_ = spd_sqrt(metric_);
}

const OrthogonalMap &MultilingualSpace::map(const std::string &lang) const {
    auto it = maps_.find(lang);
    if (it == maps_.end()) fail(ErrorKind::Input, "language '" + lang + "' is not in the multilingual space");
    return it->second;
}

std::vector<std::string> MultilingualSpace::languages() const {
    std::vector<std::string> out;
    for (const auto &[lang, u] : maps_) out.push_back(lang);
    return out;
}

Mat MultilingualSpace::composite(const std::string &src, const std::string &tgt) const {
    return map(tgt).matrix * metric_.matrix * map(src).matrix.transpose();
}

void GeommConfig::validate() const {
    if (max_iters == 0) fail(ErrorKind::Config, "geomm.max_iters must be positive");
    if (!(grad_tol >= 0.0)) fail(ErrorKind::Config, "geomm.grad_tol must be non-negative");
    if (!(loss_tol >= 0.0)) fail(ErrorKind::Config, "geomm.loss_tol must be non-negative");
    if (!(b_floor > 0.0)) fail(ErrorKind::Config, "geomm.b_floor must be positive");
    if (!(initial_step > 0.0)) fail(ErrorKind::Config, "geomm.initial_step must be positive");
}

GeommConfig::Init parse_geomm_init(const std::string &text) {
    if (text == "identity") return GeommConfig::Init::Identity;
    if (text == "random_orthogonal") return GeommConfig::Init::RandomOrthogonal;
    if (text == "procrustes") return GeommConfig::Init::Procrustes;
    fail(ErrorKind::Config, "unknown geomm init '" + text + "' (expected identity, random_orthogonal or procrustes)");
}

std::string to_string(GeommConfig::Init init) {
    switch (init) {
    case GeommConfig::Init::Identity: return "identity";
    case GeommConfig::Init::RandomOrthogonal: return "random_orthogonal";
    case GeommConfig::Init::Procrustes: return "procrustes";
    }
    return "unknown";
}

double geomm_loss(const std::map<std::string, EmbeddingMatrix> &embeddings, const std::vector<Lexicon> &lexicons,
                  const MultilingualSpace &space) {
    double loss = 0.0;
    for (const auto &lx : lexicons) {
        const Matrix &x = embeddings.at(lx.src_lang).vectors();
        const Matrix &z = embeddings.at(lx.tgt_lang).vectors();
        const Mat m = space.composite(lx.src_lang, lx.tgt_lang);
        double sum = 0.0;
        for (const auto &[a, b] : lx.pairs) {
            sum += (m * x.row(static_cast<Eigen::Index>(a)).transpose() - z.row(static_cast<Eigen::Index>(b)).transpose())
                       .squaredNorm();
        }
        loss += sum / static_cast<double>(lx.size());
    }
    return loss;
}

GeommResult fit_geomm_detailed(const std::map<std::string, EmbeddingMatrix> &embeddings,
                               const std::vector<Lexicon> &lexicons, const LanguageGraph &graph,
                               const GeommConfig &cfg) {
    cfg.validate();
    graph.validate();
    const std::vector<std::string> &nodes = graph.nodes;
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i]] = i;

    std::size_t d = 0;
    for (const auto &lang : nodes) {
        auto it = embeddings.find(lang);
        if (it == embeddings.end()) fail(ErrorKind::Input, "no embeddings for language " + lang);
        if (d == 0) d = it->second.dim();
        if (it->second.dim() != d) fail(ErrorKind::Input, "embedding dimensions differ across languages");
    }

    std::vector<EdgeTerm> terms;
    std::vector<Lexicon> edge_lexicons;
    for (const auto &edge : graph.edges) {
        const Lexicon &lx = lexicons[find_lexicon(lexicons, edge.a, edge.b)];
        if (lx.empty()) fail(ErrorKind::Input, "empty lexicon on edge " + edge.a + "-" + edge.b);
        const Matrix &x = embeddings.at(lx.src_lang).vectors();
        const Matrix &z = embeddings.at(lx.tgt_lang).vectors();
        check_lexicon(lx, static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(z.rows()));

        EdgeTerm t;
        t.src = pos.at(lx.src_lang);
        t.tgt = pos.at(lx.tgt_lang);
        t.sxx = Mat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        t.sxz = t.sxx;
        for (const auto &[a, b] : lx.pairs) {
            const auto xa = x.row(static_cast<Eigen::Index>(a)).transpose();
            const auto zb = z.row(static_cast<Eigen::Index>(b)).transpose();
            t.sxx.noalias() += xa * xa.transpose();
            t.sxz.noalias() += xa * zb.transpose();
            t.szz += zb.squaredNorm();
        }
        const double m = static_cast<double>(lx.size());
        t.sxx /= m;
        t.sxz /= m;
        t.szz /= m;
        terms.push_back(std::move(t));
        edge_lexicons.push_back(lx);
    }

    const auto dd = static_cast<Eigen::Index>(d);
    State s;
    s.u.assign(nodes.size(), Mat::Identity(dd, dd));
    s.b = Mat::Identity(dd, dd);
    if (cfg.init == GeommConfig::Init::RandomOrthogonal) {
        std::mt19937_64 rng(cfg.seed);
        for (auto &u : s.u) u = random_orthogonal(d, rng);
    } else if (cfg.init == GeommConfig::Init::Procrustes) {
        procrustes_init(s, nodes, edge_lexicons, graph, embeddings);
    }

    std::vector<GeommStep> history;
    double loss = total_loss(terms, s);
    const double gnorm0 = grad_norm(terms, s);
    history.push_back(describe(0, loss, gnorm0, s));
    std::string stop = "max_iters";

    auto try_steps = [&](auto &&candidate_at) {
        double step = cfg.initial_step;
        for (std::size_t h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
            State trial = candidate_at(step);
            const double trial_loss = total_loss(terms, trial);
            if (trial_loss < loss) {
                s = std::move(trial);
                loss = trial_loss;
                return;
            }
        }
    };

    if (gnorm0 == 0.0) {
        stop = "zero_gradient";
    } else {
        for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
            const double before = loss;
            for (std::size_t l = 0; l < s.u.size(); ++l) {
                const Mat xi = riemannian_grad_u(terms, s, l);
                if (xi.squaredNorm() == 0.0) continue;
                try_steps([&](double t) {
                    State trial = s;
                    trial.u[l] = polar(s.u[l] - t * xi);
                    return trial;
                });
            }
            const Mat gb = grad_b(terms, s);
            if (gb.squaredNorm() > 0.0) {
                try_steps([&](double t) {
                    State trial = s;
                    trial.b = project_spd(s.b - t * gb, cfg.b_floor).matrix;
                    return trial;
                });
            }

            const double gnorm = grad_norm(terms, s);
            history.push_back(describe(iter, loss, gnorm, s));
            if (gnorm <= cfg.grad_tol * gnorm0) {
                stop = "grad_tol";
                break;
            }
            if (std::abs(before - loss) <= cfg.loss_tol * std::max(std::abs(before), 1e-300)) {
                stop = "loss_tol";
                break;
            }
        }
    }

    std::map<std::string, OrthogonalMap> maps;
    for (std::size_t l = 0; l < nodes.size(); ++l) maps.emplace(nodes[l], OrthogonalMap{s.u[l]});
    return {MultilingualSpace(std::move(maps), SPDMetric{s.b}), std::move(history), stop};
}

MultilingualSpace fit_geomm(const std::map<std::string, EmbeddingMatrix> &embeddings,
                            const std::vector<Lexicon> &lexicons, const LanguageGraph &graph, const GeommConfig &cfg) {
    return fit_geomm_detailed(embeddings, lexicons, graph, cfg).space;
}

EmbeddingMatrix map_to_latent(const MultilingualSpace &space, const std::string &lang, const EmbeddingMatrix &x,
                              bool normalize_rows) {
    const OrthogonalMap &u = space.map(lang);
    if (x.dim() != space.dim()) fail(ErrorKind::Input, "embedding dimension does not match the space");
    // Row form of B^{1/2} U^T x.
    Matrix latent = x.vectors() * u.matrix * space.sqrt_metric();
    EmbeddingMatrix out = x.with_vectors(std::move(latent));
    return normalize_rows ? normalize(out, {NormStep::Unit}) : out;
}

void save_space(const MultilingualSpace &space, const std::filesystem::path &dir, const std::string &extra_json) {
    std::filesystem::create_directories(dir);
    write_matrix_f64(space.metric().matrix, dir / "B.bin");
    write_matrix_f64(space.sqrt_metric(), dir / "B_sqrt.bin");
    nlohmann::json manifest = nlohmann::json::parse(extra_json);
    manifest["languages"] = space.languages();
    manifest["dim"] = space.dim();
    manifest["metric"] = "B.bin";
    manifest["sqrt_metric"] = "B_sqrt.bin";
    for (const auto &[lang, u] : space.maps()) {
        const std::string file = "U_" + lang + ".bin";
        write_matrix_f64(u.matrix, dir / file);
        manifest["maps"][lang] = file;
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) fail(ErrorKind::Io, "cannot write space manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

MultilingualSpace load_space(const std::filesystem::path &dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) fail(ErrorKind::Io, "cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::Format, "space manifest: " + std::string(e.what()));
    }
    if (!manifest.contains("maps") || !manifest.contains("metric")) {
        fail(ErrorKind::Format, "space manifest lacks 'maps' or 'metric'");
    }
    std::map<std::string, OrthogonalMap> maps;
    for (const auto &[lang, file] : manifest["maps"].items()) {
        maps.emplace(lang, OrthogonalMap{read_matrix_f64(dir / file.get<std::string>())});
    }
    return MultilingualSpace(std::move(maps), SPDMetric{read_matrix_f64(dir / manifest["metric"].get<std::string>())});
}

void write_geomm_log(const std::vector<GeommStep> &history, const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write log: " + path.string());
    out << "iter,loss,grad_norm,max_orth_error,b_asymmetry,b_min_eigenvalue\n" << std::setprecision(17);
    for (const auto &s : history) {
        out << s.iter << ',' << s.loss << ',' << s.grad_norm << ',' << s.max_orth_error << ',' << s.b_asymmetry << ','
            << s.b_min_eigenvalue << '\n';
    }
}

}  // namespace umml
