#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "umml/align_core.hpp"

namespace umml {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Transport plan between two vocabularies.
struct Coupling {
    FloatMatrix plan;
    Vector row_marginal;
    Vector col_marginal;

    // Largest |row sum - row_marginal| (resp. columns), accumulated in double.
    double row_violation() const;
    double col_violation() const;

    // For each source row the column with the most mass; ties to the lower index.
    std::vector<std::size_t> row_argmax() const;
};

struct GWConfig {
    enum class Precision { Automatic, Single, Double };

    double epsilon = 5e-4;
    std::size_t outer_iters = 300;
    std::size_t sinkhorn_iters = 50;
    // Sinkhorn keeps iterating past sinkhorn_iters, up to this many, until the
    // row marginals are within marginal_tol (relative to each target mass).
    // The scaled plan is then rounded onto the marginals exactly; the error
    // before rounding is kept in the step log.
    std::size_t sinkhorn_max_iters = 2000;
    double marginal_tol = 1e-8;
    double conv_tol = 1e-7;
    std::size_t refine_rounds = 5;
    std::size_t refine_csls_k = 10;
    std::size_t train_vocab = 20000;
    // Automatic stores matrices in float above 4096 rows, double otherwise.
    Precision precision = Precision::Automatic;

    void validate() const;
};

struct GWStep {
    std::size_t iter = 0;
    double gw_objective = 0.0;      // sum (Cx(i,k) - Cz(j,l))^2 G(i,j) G(k,l)
    double entropy = 0.0;           // -sum G log G
    double regularized = 0.0;       // gw_objective - epsilon * entropy
    double change = 0.0;            // relative L1 change of the plan
    double row_violation = 0.0;
    double col_violation = 0.0;
    std::size_t sinkhorn_iters = 0;
    double sinkhorn_residual = 0.0;  // relative row error before rounding
};

struct GWResult {
    Coupling coupling;
    // Entry 0 describes the uniform starting plan; entry t the plan after t
    // outer iterations.
    std::vector<GWStep> history;
    bool converged = false;
    std::size_t sinkhorn_capped = 0;  // projections that stopped at sinkhorn_max_iters
};

// Intra-language cosine similarities rescaled by their largest magnitude.
Eigen::MatrixXd gw_cost_matrix(const Matrix &rows);

// Square-loss GW objective of a plan, in double. Exposed for oracles and logs.
double gw_objective(const Eigen::MatrixXd &cx, const Eigen::MatrixXd &cz, const Eigen::MatrixXd &plan);

// Entropic Gromov-Wasserstein between the first train_vocab rows of x and z,
// with uniform marginals. Each outer step linearizes the objective at the
// current plan and projects exp(-grad / epsilon) onto the marginals by
// Sinkhorn scaling.
GWResult gw_align_detailed(const EmbeddingMatrix &x, const EmbeddingMatrix &z, const GWConfig &cfg);

Coupling gw_align(const EmbeddingMatrix &x, const EmbeddingMatrix &z, const GWConfig &cfg);

// Row-argmax lexicon of the plan, then refine_rounds of Procrustes followed by
// CSLS union induction on the same vocabularies.
Lexicon refine(const Coupling &gamma, const EmbeddingMatrix &x, const EmbeddingMatrix &z, const GWConfig &cfg);

void write_coupling(const Coupling &gamma, const std::filesystem::path &path);

// iter,gw_objective,entropy,regularized,change,row_violation,col_violation,sinkhorn_iters,
// sinkhorn_residual
void write_gw_log(const std::vector<GWStep> &history, const std::filesystem::path &path);

}  // namespace umml
