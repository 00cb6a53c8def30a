#include "umml/align_gw.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <type_traits>

#include "umml/error.hpp"
#include "umml/matrix_io.hpp"

namespace umml {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

Matrix unit_rows(const Matrix &rows) {
    Matrix out = rows;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double norm = out.row(i).norm();
        if (norm == 0.0) fail(ErrorKind::Numeric, "GW cost: zero-norm row " + std::to_string(i));
        out.row(i) /= norm;
    }
    return out;
}

template <typename T>
Mat<T> cost_matrix(const Matrix &rows) {
    const Mat<T> unit = unit_rows(rows).cast<T>();
    Mat<T> c = unit * unit.transpose();
    const T scale = c.cwiseAbs().maxCoeff();
    if (!(scale > T(0))) fail(ErrorKind::Numeric, "GW cost matrix is identically zero");
    c /= scale;
    return c;
}

// (C o C) w, accumulated in double.
template <typename T>
Vector squared_times(const Mat<T> &c, const Vector &w) {
    Vector out(c.rows());
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        double s = 0.0;
        const T *row = c.row(i).data();
        for (Eigen::Index k = 0; k < c.cols(); ++k) s += static_cast<double>(row[k]) * row[k] * w(k);
        out(i) = s;
    }
    return out;
}

template <typename T>
void marginals(const Mat<T> &plan, Vector &rows, Vector &cols) {
    rows = Vector::Zero(plan.rows());
    cols = Vector::Zero(plan.cols());
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        const T *row = plan.row(i).data();
        double s = 0.0;
        for (Eigen::Index j = 0; j < plan.cols(); ++j) {
            s += row[j];
            cols(j) += row[j];
        }
        rows(i) = s;
    }
}

// K v and K^T u with double accumulation.
template <typename T>
Vector times(const Mat<T> &k, const Vector &v) {
    if constexpr (std::is_same_v<T, double>) {
        return k * v;
    } else {
        Vector out(k.rows());
        for (Eigen::Index i = 0; i < k.rows(); ++i) {
            const T *row = k.row(i).data();
            double s = 0.0;
            for (Eigen::Index j = 0; j < k.cols(); ++j) s += static_cast<double>(row[j]) * v(j);
            out(i) = s;
        }
        return out;
    }
}

template <typename T>
Vector transpose_times(const Mat<T> &k, const Vector &u) {
    if constexpr (std::is_same_v<T, double>) {
        return k.transpose() * u;
    } else {
        Vector out = Vector::Zero(k.cols());
        for (Eigen::Index i = 0; i < k.rows(); ++i) {
            const T *row = k.row(i).data();
            for (Eigen::Index j = 0; j < k.cols(); ++j) out(j) += static_cast<double>(row[j]) * u(i);
        }
        return out;
    }
}

// Dual potentials f, g with plan(i, j) = u_i exp((f_i + g_j - G_ij) / e) v_j.
// The scaling vectors u, v are folded into f, g whenever they drift far from 1.
template <typename T>
class Sinkhorn {
public:
    Sinkhorn(const Vector &a, const Vector &b, double eps)
        : a_(a), b_(b), eps_(eps), f_(Vector::Zero(a.size())), g_(Vector::Zero(b.size())) {}

    // Projects exp(-grad / eps) onto the marginals, writing the plan into
    // `grad` (which is consumed). Scaling starts from the previous
    // potentials, runs at least min_iters steps and stops once the row
    // marginals are within tol or after max_iters. Returns the step count.
    std::size_t project(Mat<T> &grad, std::size_t min_iters, std::size_t max_iters, double tol) {
        tol = std::max(tol, 8.0 * static_cast<double>(std::numeric_limits<T>::epsilon()));
        const Mat<T> cost = grad;  // kept to rebuild the kernel after absorption
        std::size_t steps = 0;
        capped_ = !scale(cost, grad, eps_, min_iters, max_iters, tol, steps);
        return steps;
    }

    bool capped() const { return capped_; }

    // Relative row error of the scaled plan before rounding.
    double residual() const { return residual_; }

    // Overwrites the kernel left by project() with diag(u) K diag(v), then
    // rounds it onto the marginals: rows and then columns above their
    // targets are scaled down, and the remaining deficits are filled by a
    // rank-one update. The L1 change is at most twice the marginal error.
    void finish(Mat<T> &kernel) const {
        for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
            T *k = kernel.row(i).data();
            for (Eigen::Index j = 0; j < kernel.cols(); ++j) k[j] = static_cast<T>(u_(i) * k[j] * v_(j));
        }
        Vector rows, cols;
        marginals(kernel, rows, cols);
        for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
            if (rows(i) > a_(i)) kernel.row(i) *= static_cast<T>(a_(i) / rows(i));
        }
        marginals(kernel, rows, cols);
        Vector col_scale = Vector::Ones(kernel.cols());
        for (Eigen::Index j = 0; j < kernel.cols(); ++j) {
            if (cols(j) > b_(j)) col_scale(j) = b_(j) / cols(j);
        }
        for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
            T *k = kernel.row(i).data();
            for (Eigen::Index j = 0; j < kernel.cols(); ++j) k[j] = static_cast<T>(k[j] * col_scale(j));
        }
        marginals(kernel, rows, cols);
        const Vector dr = (a_ - rows).cwiseMax(0.0);
        const Vector dc = (b_ - cols).cwiseMax(0.0);
        const double mass = dr.sum();
        if (mass <= 0.0) return;
        for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
            if (dr(i) == 0.0) continue;
            T *k = kernel.row(i).data();
            for (Eigen::Index j = 0; j < kernel.cols(); ++j) k[j] = static_cast<T>(k[j] + dr(i) * dc(j) / mass);
        }
    }

private:
    // Scaling steps at regularization e. Returns whether the row marginals
    // reached tol; either way the kernel and u_, v_ describe the last plan.
    bool scale(const Mat<T> &cost, Mat<T> &kernel, double e, std::size_t min_iters, std::size_t max_iters, double tol,
               std::size_t &steps) {
        log_domain_update(cost, e);
        build_kernel(cost, kernel, e);

        Vector u = Vector::Ones(a_.size());
        Vector v = Vector::Ones(b_.size());
        constexpr double absorb_at = 50.0;
        std::size_t failed_rebuilds = 0;

        Vector kv = times(kernel, v);
        for (std::size_t it = 0;; ++it) {
            if (it > 0) {
                double err = 0.0;
                for (Eigen::Index i = 0; i < u.size(); ++i) err = std::max(err, std::abs(u(i) * kv(i) - a_(i)) / a_(i));
                const bool done = err <= tol && it >= min_iters;
                if (done || it >= max_iters) {
                    u_ = u;
                    v_ = v;
                    residual_ = err;
                    return done;
                }
            }
            u = a_.cwiseQuotient(kv);
            v = b_.cwiseQuotient(transpose_times(kernel, u));
            ++steps;

            const bool finite = u.allFinite() && v.allFinite() && (u.array() > 0).all() && (v.array() > 0).all();
            if (!finite) {
                // A whole row or column of the kernel underflowed; re-anchor the
                // potentials exactly and rebuild.
                if (++failed_rebuilds > 2) {
                    fail(ErrorKind::Numeric, "Sinkhorn scaling overflowed or underflowed; try a larger epsilon");
                }
                log_domain_update(cost, e);
                build_kernel(cost, kernel, e);
                u.setOnes();
                v.setOnes();
            } else {
                failed_rebuilds = 0;
                const double drift = std::max(u.array().log().abs().maxCoeff(), v.array().log().abs().maxCoeff());
                if (drift > absorb_at) {
                    f_ += e * u.array().log().matrix();
                    g_ += e * v.array().log().matrix();
                    build_kernel(cost, kernel, e);
                    u.setOnes();
                    v.setOnes();
                }
            }
            kv = times(kernel, v);
        }
    }

    // One exact row then column update of the potentials in log space.
    void log_domain_update(const Mat<T> &cost, double e) {
        const Eigen::Index n = cost.rows();
        const Eigen::Index m = cost.cols();
        for (Eigen::Index i = 0; i < n; ++i) {
            const T *row = cost.row(i).data();
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < m; ++j) mx = std::max(mx, g_(j) - row[j]);
            double s = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) s += std::exp((g_(j) - row[j] - mx) / e);
            f_(i) = e * std::log(a_(i)) - mx - e * std::log(s);
        }
        Vector mx = Vector::Constant(m, -std::numeric_limits<double>::infinity());
        for (Eigen::Index i = 0; i < n; ++i) {
            const T *row = cost.row(i).data();
            for (Eigen::Index j = 0; j < m; ++j) mx(j) = std::max(mx(j), f_(i) - row[j]);
        }
        Vector s = Vector::Zero(m);
        for (Eigen::Index i = 0; i < n; ++i) {
            const T *row = cost.row(i).data();
            for (Eigen::Index j = 0; j < m; ++j) s(j) += std::exp((f_(i) - row[j] - mx(j)) / e);
        }
        for (Eigen::Index j = 0; j < m; ++j) g_(j) = e * std::log(b_(j)) - mx(j) - e * std::log(s(j));
        if (!f_.allFinite() || !g_.allFinite()) {
            fail(ErrorKind::Numeric, "Sinkhorn potentials are not finite; try a larger epsilon");
        }
    }

    void build_kernel(const Mat<T> &cost, Mat<T> &kernel, double e) const {
        for (Eigen::Index i = 0; i < cost.rows(); ++i) {
            const T *c = cost.row(i).data();
            T *k = kernel.row(i).data();
            for (Eigen::Index j = 0; j < cost.cols(); ++j) {
                k[j] = static_cast<T>(std::exp((f_(i) + g_(j) - c[j]) / e));
            }
        }
    }

    Vector a_, b_;
    double eps_;
    Vector f_, g_;
    Vector u_, v_;
    double residual_ = 0.0;
    bool capped_ = false;
};

template <typename T>
GWResult solve(const Matrix &xr, const Matrix &zr, const GWConfig &cfg) {
    const Eigen::Index ns = xr.rows();
    const Eigen::Index nt = zr.rows();
    const Mat<T> cx = cost_matrix<T>(xr);
    const Mat<T> cz = cost_matrix<T>(zr);
    const Vector a = Vector::Constant(ns, 1.0 / static_cast<double>(ns));
    const Vector b = Vector::Constant(nt, 1.0 / static_cast<double>(nt));

    Mat<T> plan = (a * b.transpose()).cast<T>();
    Mat<T> left(ns, nt);
    Mat<T> work(ns, nt);
    Sinkhorn<T> sinkhorn(a, b, cfg.epsilon);

    GWResult result;
    double change = 0.0;
    std::size_t last_sinkhorn = 0;
    double last_residual = 0.0;
    for (std::size_t iter = 0;; ++iter) {
        // cross = Cx plan Cz (both costs are symmetric)
        left.noalias() = cx * plan;
        work.noalias() = left * cz;

        Vector p, q;
        marginals(plan, p, q);
        double cross = 0.0;
        double entropy = 0.0;
        for (Eigen::Index i = 0; i < ns; ++i) {
            const T *g = plan.row(i).data();
            const T *w = work.row(i).data();
            for (Eigen::Index j = 0; j < nt; ++j) {
                cross += static_cast<double>(w[j]) * g[j];
                if (g[j] > T(0)) entropy -= static_cast<double>(g[j]) * std::log(static_cast<double>(g[j]));
            }
        }
        GWStep step;
        step.iter = iter;
        step.gw_objective = p.dot(squared_times(cx, p)) + q.dot(squared_times(cz, q)) - 2.0 * cross;
        step.entropy = entropy;
        step.regularized = step.gw_objective - cfg.epsilon * entropy;
        step.change = change;
        step.row_violation = (p - a).cwiseAbs().maxCoeff();
        step.col_violation = (q - b).cwiseAbs().maxCoeff();
        step.sinkhorn_iters = last_sinkhorn;
        step.sinkhorn_residual = last_residual;
        if (!std::isfinite(step.regularized)) fail(ErrorKind::Numeric, "GW objective is not finite");
        result.history.push_back(step);

        if (iter > 0 && change < cfg.conv_tol) {
            result.converged = true;
            break;
        }
        if (iter == cfg.outer_iters) break;

        // Gradient of the square loss at the plan, up to row and column
        // constants that the marginal projection absorbs: -4 Cx plan Cz.
        work *= T(-4);
        last_sinkhorn = sinkhorn.project(work, cfg.sinkhorn_iters, cfg.sinkhorn_max_iters, cfg.marginal_tol);
        sinkhorn.finish(work);
        if (sinkhorn.capped()) ++result.sinkhorn_capped;
        last_residual = sinkhorn.residual();

        double diff = 0.0;
        double mass = 0.0;
        for (Eigen::Index i = 0; i < ns; ++i) {
            const T *g = plan.row(i).data();
            const T *w = work.row(i).data();
            for (Eigen::Index j = 0; j < nt; ++j) {
                diff += std::abs(static_cast<double>(w[j]) - g[j]);
                mass += g[j];
            }
        }
        change = diff / mass;
        plan.swap(work);
    }

    result.coupling.plan = plan.template cast<float>();
    result.coupling.row_marginal = a;
    result.coupling.col_marginal = b;
    return result;
}

}  // namespace

double Coupling::row_violation() const {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < plan.cols(); ++j) s += plan(i, j);
        worst = std::max(worst, std::abs(s - row_marginal(i)));
    }
    return worst;
}

double Coupling::col_violation() const {
    Vector sums = Vector::Zero(plan.cols());
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        for (Eigen::Index j = 0; j < plan.cols(); ++j) sums(j) += plan(i, j);
    }
    return (sums - col_marginal).cwiseAbs().maxCoeff();
}

std::vector<std::size_t> Coupling::row_argmax() const {
    std::vector<std::size_t> out(static_cast<std::size_t>(plan.rows()));
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < plan.cols(); ++j) {
            if (plan(i, j) > plan(i, best)) best = j;
        }
        out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
    }
    return out;
}

void GWConfig::validate() const {
    if (!(epsilon > 0.0)) fail(ErrorKind::Config, "gw.epsilon must be positive");
    if (outer_iters == 0) fail(ErrorKind::Config, "gw.outer_iters must be positive");
    if (sinkhorn_iters == 0) fail(ErrorKind::Config, "gw.sinkhorn_iters must be positive");
    if (sinkhorn_max_iters < sinkhorn_iters) fail(ErrorKind::Config, "gw.sinkhorn_max_iters is below gw.sinkhorn_iters");
    if (!(marginal_tol > 0.0)) fail(ErrorKind::Config, "gw.marginal_tol must be positive");
    if (!(conv_tol >= 0.0)) fail(ErrorKind::Config, "gw.conv_tol must be non-negative");
    if (refine_csls_k == 0) fail(ErrorKind::Config, "gw.refine_csls_k must be positive");
    if (train_vocab == 0) fail(ErrorKind::Config, "gw.train_vocab must be positive");
}

Eigen::MatrixXd gw_cost_matrix(const Matrix &rows) { return cost_matrix<double>(rows); }

double gw_objective(const Eigen::MatrixXd &cx, const Eigen::MatrixXd &cz, const Eigen::MatrixXd &plan) {
    const Vector p = plan.rowwise().sum();
    const Vector q = plan.colwise().sum().transpose();
    const double const_x = p.dot(cx.array().square().matrix() * p);
    const double const_z = q.dot(cz.array().square().matrix() * q);
    const double cross = (cx * plan * cz.transpose()).cwiseProduct(plan).sum();
    return const_x + const_z - 2.0 * cross;
}

GWResult gw_align_detailed(const EmbeddingMatrix &x, const EmbeddingMatrix &z, const GWConfig &cfg) {
    cfg.validate();
    if (x.dim() != z.dim()) fail(ErrorKind::Input, "GW needs equal dimensions");
    const EmbeddingMatrix xs = x.head(cfg.train_vocab);
    const EmbeddingMatrix zs = z.head(cfg.train_vocab);
    bool single = cfg.precision == GWConfig::Precision::Single;
    if (cfg.precision == GWConfig::Precision::Automatic) single = std::max(xs.size(), zs.size()) > 4096;
    return single ? solve<float>(xs.vectors(), zs.vectors(), cfg) : solve<double>(xs.vectors(), zs.vectors(), cfg);
}

Coupling gw_align(const EmbeddingMatrix &x, const EmbeddingMatrix &z, const GWConfig &cfg) {
    return gw_align_detailed(x, z, cfg).coupling;
}

Lexicon refine(const Coupling &gamma, const EmbeddingMatrix &x, const EmbeddingMatrix &z, const GWConfig &cfg) {
    const auto ns = static_cast<std::size_t>(gamma.plan.rows());
    const auto nt = static_cast<std::size_t>(gamma.plan.cols());
    if (x.size() < ns || z.size() < nt) fail(ErrorKind::Input, "coupling is larger than the vocabularies");
    const EmbeddingMatrix xs = x.head(ns);
    const EmbeddingMatrix zs = z.head(nt);

    Lexicon lexicon{x.lang(), z.lang(), {}};
    const auto argmax = gamma.row_argmax();
    for (std::size_t i = 0; i < ns; ++i) lexicon.pairs.emplace_back(i, argmax[i]);

    const std::size_t k = std::min({cfg.refine_csls_k, ns, nt});
    for (std::size_t round = 0; round < cfg.refine_rounds; ++round) {
        const OrthogonalMap w = solve_procrustes(lexicon, xs.vectors(), zs.vectors());
        lexicon = induce_lexicon(w, xs, zs, Retrieval::csls(k), Direction::Union);
    }
    return lexicon;
}

void write_coupling(const Coupling &gamma, const std::filesystem::path &path) {
    write_matrix_f32(gamma.plan, path);
}

void write_gw_log(const std::vector<GWStep> &history, const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write log: " + path.string());
    out << "iter,gw_objective,entropy,regularized,change,row_violation,col_violation,sinkhorn_iters,sinkhorn_residual\n"
        << std::setprecision(17);
    for (const auto &s : history) {
        out << s.iter << ',' << s.gw_objective << ',' << s.entropy << ',' << s.regularized << ',' << s.change << ','
            << s.row_violation << ',' << s.col_violation << ',' << s.sinkhorn_iters << ',' << s.sinkhorn_residual
            << '\n';
    }
}

}  // namespace umml
