#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "umml/align_core.hpp"

namespace umml {

enum class EdgeSource { SelfLearn, GW, Supplied };

EdgeSource parse_edge_source(const std::string &text);
std::string to_string(EdgeSource source);

// Undirected language graph. Each edge names how its lexicon is obtained.
struct LanguageGraph {
    struct Edge {
        std::string a;
        std::string b;
        EdgeSource source = EdgeSource::SelfLearn;
        std::filesystem::path lexicon_path;  // only for Supplied
    };

    std::vector<std::string> nodes;
    std::vector<Edge> edges;

    // Every problem found: unknown endpoints, self-loops, duplicate edges,
    // nodes unreachable from the first node. Empty when valid.
    std::vector<std::string> violations() const;

    // Throws a Config error listing all violations.
    void validate() const;
};

struct SPDMetric {
    Eigen::MatrixXd matrix;

    double asymmetry() const;  // ||B - B^T||_F
    double min_eigenvalue() const;
};

// Symmetric part of `m` with eigenvalues clamped below at `floor`.
SPDMetric project_spd(const Eigen::MatrixXd &m, double floor);

// Principal square root by symmetric eigendecomposition.
Eigen::MatrixXd spd_sqrt(const SPDMetric &b);

// Per-language rotations U_i and a shared metric B. A word x of language i
// lives at B^{1/2} U_i^T x in the latent space.
class MultilingualSpace {
public:
    MultilingualSpace(std::map<std::string, OrthogonalMap> maps, SPDMetric metric);

    const std::map<std::string, OrthogonalMap> &maps() const { return maps_; }
    const OrthogonalMap &map(const std::string &lang) const;
    const SPDMetric &metric() const { return metric_; }
    const Eigen::MatrixXd &sqrt_metric() const { return sqrt_metric_; }
    std::size_t dim() const { return static_cast<std::size_t>(metric_.matrix.rows()); }
    std::vector<std::string> languages() const;

    // U_tgt B U_src^T: the translation operator between two languages.
    Eigen::MatrixXd composite(const std::string &src, const std::string &tgt) const;

private:
    std::map<std::string, OrthogonalMap> maps_;
    SPDMetric metric_;
    Eigen::MatrixXd sqrt_metric_;
};

struct GeommConfig {
    enum class Init { Identity, RandomOrthogonal, Procrustes };

    std::size_t max_iters = 150;
    double grad_tol = 1e-6;  // relative to the gradient norm at the start
    double loss_tol = 1e-6;  // relative loss change between iterations
    double b_floor = 1e-10;
    std::uint64_t seed = 0;
    Init init = Init::Procrustes;
    double initial_step = 1.0;
    std::size_t max_halvings = 30;

    void validate() const;
};

GeommConfig::Init parse_geomm_init(const std::string &text);
std::string to_string(GeommConfig::Init init);

struct GeommStep {
    std::size_t iter = 0;
    double loss = 0.0;
    double grad_norm = 0.0;       // Riemannian gradient norm over all blocks
    double max_orth_error = 0.0;  // worst ||U^T U - I||_F
    double b_asymmetry = 0.0;
    double b_min_eigenvalue = 0.0;
};

struct GeommResult {
    MultilingualSpace space;
    std::vector<GeommStep> history;  // entry 0 is the starting point
    std::string stop_reason;
};

// sum over edges (i, j) of mean_{(a,b) in Y_ij} ||U_j B U_i^T x_a - z_b||^2
// where the lexicon's source language is i.
double geomm_loss(const std::map<std::string, EmbeddingMatrix> &embeddings, const std::vector<Lexicon> &lexicons,
                  const MultilingualSpace &space);

// Alternating first-order minimization: each U_i steps along its Riemannian
// gradient and is retracted by polar factorization, then B takes a
// symmetrized gradient step and is projected back onto the SPD cone. Every
// step halves from initial_step until the loss decreases.
GeommResult fit_geomm_detailed(const std::map<std::string, EmbeddingMatrix> &embeddings,
                               const std::vector<Lexicon> &lexicons, const LanguageGraph &graph,
                               const GeommConfig &cfg);

MultilingualSpace fit_geomm(const std::map<std::string, EmbeddingMatrix> &embeddings,
                            const std::vector<Lexicon> &lexicons, const LanguageGraph &graph, const GeommConfig &cfg);

// Rows x -> B^{1/2} U_lang^T x, optionally unit-normalized afterwards.
EmbeddingMatrix map_to_latent(const MultilingualSpace &space, const std::string &lang, const EmbeddingMatrix &x,
                              bool normalize_rows = true);

// Directory with B.bin, B_sqrt.bin, U_<lang>.bin (see matrix_io) and
// manifest.json. `extra` is merged into the manifest.
void save_space(const MultilingualSpace &space, const std::filesystem::path &dir, const std::string &extra_json = "{}");
MultilingualSpace load_space(const std::filesystem::path &dir);

void write_geomm_log(const std::vector<GeommStep> &history, const std::filesystem::path &path);

}  // namespace umml
