#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "tsdd/error.hpp"
#include "tsdd/geometry.hpp"
#include "tsdd/patch_system.hpp"

/// Semilinear elliptic problem -div(a grad u) + u^3 = s on rectangles of a uniform grid.
namespace tsdd::elliptic {

/// a(x, y, x/eps, y/eps) for the two-scale oscillatory medium.
inline double media_eval(double eps, double x, double y)
{
    constexpr double tau = 2.0 * std::numbers::pi;
    return 2.0 + std::sin(tau * x) * std::cos(tau * y)
           + (2.0 + 1.8 * std::sin(tau * x / eps)) / (2.0 + 1.8 * std::cos(tau * y / eps))
           + (2.0 + std::sin(tau * y / eps)) / (2.0 + 1.8 * std::cos(tau * x / eps));
}

struct OscillatoryMedia {
    double eps = 1.0;
    double operator()(double x, double y) const { return media_eval(eps, x, y); }
};

struct NewtonOptions {
    double tol = 1e-10;    ///< infinity norm of the discrete residual
    int max_iter = 50;
    int max_halvings = 10;
};

struct NewtonReport {
    int iterations = 0;
    double residual = 0.0;
};

/// Nodal field on a patch rectangle (values in IndexRect::local order).
struct Field {
    IndexRect rect;
    double h = 0.0;
    Vector values;
    NewtonReport report;

    double at(int i, int j) const { return values[static_cast<Eigen::Index>(rect.local(i, j))]; }
};

/// Coordinates of the perimeter nodes of `r`, one row per node.
inline Matrix trace_nodes(const IndexRect& r, const Grid2D& grid)
{
    const auto nodes = perimeter_nodes(r);
    Matrix z(static_cast<Eigen::Index>(nodes.size()), 2);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        z(static_cast<Eigen::Index>(k), 0) = grid.coord(nodes[k][0]);
        z(static_cast<Eigen::Index>(k), 1) = grid.coord(nodes[k][1]);
    }
    return z;
}

/// Perimeter values of a nodal field on `r`, counterclockwise from the southwest corner.
inline Vector extract_trace(const Vector& values, const IndexRect& r)
{
    const auto nodes = perimeter_nodes(r);
    Vector t(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k) t[static_cast<Eigen::Index>(k)] = values[static_cast<Eigen::Index>(r.local(nodes[k][0], nodes[k][1]))];
    return t;
}

/// Restriction of a field on `outer` to the nodes of the sub-rectangle `inner`.
inline Vector confine(const Vector& values, const IndexRect& outer, const IndexRect& inner)
{
    if (!(outer.contains(inner.i0, inner.j0) && outer.contains(inner.i1, inner.j1)))
        throw StructuralError("confine: inner rectangle not contained in outer");
    Vector out(static_cast<Eigen::Index>(inner.node_count()));
    for (int j = inner.j0; j <= inner.j1; ++j)
        for (int i = inner.i0; i <= inner.i1; ++i)
            out[static_cast<Eigen::Index>(inner.local(i, j))] = values[static_cast<Eigen::Index>(outer.local(i, j))];
    return out;
}

/// Global Dirichlet data phi(x,0) = -sin 2pi x, phi(x,1) = sin 2pi x, phi(0,y) = sin 2pi y, phi(1,y) = -sin 2pi y.
inline Vector oscillating_boundary_data(const Grid2D& grid)
{
    constexpr double tau = 2.0 * std::numbers::pi;
    const IndexRect dom{0, grid.n, 0, grid.n};
    const auto nodes = perimeter_nodes(dom);
    Vector g(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const int i = nodes[k][0], j = nodes[k][1];
        const double x = grid.coord(i), y = grid.coord(j);
        double v = 0.0;
        if (j == 0) v = -std::sin(tau * x);
        else if (j == grid.n) v = std::sin(tau * x);
        else if (i == 0) v = std::sin(tau * y);
        else v = -std::sin(tau * y);
        g[static_cast<Eigen::Index>(k)] = v;
    }
    return g;
}

/**
 * Vertex-centred finite-volume Newton solver on one rectangle.
 *
 * Each interior node owns the dual cell of side h around it; the flux through
 * a dual face is a_f (u_nbr - u) with a_f the harmonic mean of the media at
 * the two nodes. The discrete equation at an interior node is
 *   sum_f a_f (u - u_nbr) + h^2 u^3 = h^2 s(x, y),
 * and perimeter nodes carry the Dirichlet trace. The stiffness pattern and
 * its symbolic factorization are built once and reused for every solve.
 */
class LocalSolver {
public:
    using SourceFn = std::function<double(double, double)>;
    using SpMat = Eigen::SparseMatrix<double>;

    template <class MediaFn>
    LocalSolver(const MediaFn& media, const Grid2D& grid, const IndexRect& rect, NewtonOptions opts = {},
                SourceFn source = {})
        : grid_(grid), rect_(rect), opts_(opts), h_(grid.h())
    {
        const int nx = rect.nx(), ny = rect.ny();
        if (nx < 1 || ny < 1)
            throw ConfigError("LocalSolver: degenerate rectangle");
        std::vector<double> a(rect.node_count());
        for (int j = rect.j0; j <= rect.j1; ++j)
            for (int i = rect.i0; i <= rect.i1; ++i) {
                const double v = media(grid.coord(i), grid.coord(j));
                if (!(v > 0.0))
                    throw ConfigError("media must be positive");
                a[rect.local(i, j)] = v;
            }
        const auto harmonic = [](double p, double q) { return 2.0 * p * q / (p + q); };
        ax_.assign(rect.node_count(), 0.0);
        ay_.assign(rect.node_count(), 0.0);
        for (int j = rect.j0; j <= rect.j1; ++j)
            for (int i = rect.i0; i <= rect.i1; ++i) {
                const std::size_t k = rect.local(i, j);
                if (i < rect.i1) ax_[k] = harmonic(a[k], a[rect.local(i + 1, j)]);
                if (j < rect.j1) ay_[k] = harmonic(a[k], a[rect.local(i, j + 1)]);
            }

        // interior unknown numbering
        unknown_.assign(rect.node_count(), -1);
        for (int j = rect.j0 + 1; j < rect.j1; ++j)
            for (int i = rect.i0 + 1; i < rect.i1; ++i) {
                unknown_[rect.local(i, j)] = static_cast<int>(nodes_.size());
                nodes_.push_back(rect.local(i, j));
            }
        source_.assign(nodes_.size(), 0.0);
        if (source)
            for (std::size_t q = 0; q < nodes_.size(); ++q) {
                const auto [i, j] = ij(nodes_[q]);
                source_[q] = h_ * h_ * source(grid.coord(i), grid.coord(j));
            }

        if (!nodes_.empty()) {
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(nodes_.size() * 5);
            for (std::size_t q = 0; q < nodes_.size(); ++q) {
                const auto [i, j] = ij(nodes_[q]);
                double diag = 0.0;
                for_each_face(i, j, [&](std::size_t nb, double af) {
                    diag += af;
                    if (unknown_[nb] >= 0)
                        trip.emplace_back(static_cast<int>(q), unknown_[nb], -af);
                });
                trip.emplace_back(static_cast<int>(q), static_cast<int>(q), diag);
            }
            const auto nu = static_cast<Eigen::Index>(nodes_.size());
            stiffness_.resize(nu, nu);
            stiffness_.setFromTriplets(trip.begin(), trip.end());
            stiffness_.makeCompressed();
            jac_ = stiffness_;
            diag_pos_.resize(nodes_.size());
            for (Eigen::Index c = 0; c < nu; ++c)
                for (Eigen::Index p = jac_.outerIndexPtr()[c]; p < jac_.outerIndexPtr()[c + 1]; ++p)
                    if (jac_.innerIndexPtr()[p] == c) diag_pos_[static_cast<std::size_t>(c)] = p;
            llt_.analyzePattern(jac_);
        }
    }

    const IndexRect& rect() const { return rect_; }
    const Grid2D& grid() const { return grid_; }

    /// Solve with Dirichlet `trace`; `initial`, if given, supplies the interior starting iterate.
    Field solve(const Vector& trace, const Vector* initial = nullptr)
    {
        if (static_cast<std::size_t>(trace.size()) != rect_.perimeter_count())
            throw ConfigError("trace length does not match the patch perimeter");
        Field f;
        f.rect = rect_;
        f.h = h_;
        f.values = initial ? *initial : coons(trace);
        if (static_cast<std::size_t>(f.values.size()) != rect_.node_count())
            throw ConfigError("initial iterate has the wrong size");
        const auto per = perimeter_nodes(rect_);
        for (std::size_t k = 0; k < per.size(); ++k)
            f.values[static_cast<Eigen::Index>(rect_.local(per[k][0], per[k][1]))] = trace[static_cast<Eigen::Index>(k)];
        if (nodes_.empty())
            return f;

        Vector r = residual(f.values);
        double res = r.lpNorm<Eigen::Infinity>();
        int it = 0;
        while (res > opts_.tol) {
            if (it == opts_.max_iter)
                throw SolverFailure("Newton did not converge on elliptic patch", res);
            for (std::size_t q = 0; q < nodes_.size(); ++q) {
                const double u = f.values[static_cast<Eigen::Index>(nodes_[q])];
                jac_.valuePtr()[diag_pos_[q]] = stiffness_diag(q) + 3.0 * h_ * h_ * u * u;
            }
            llt_.factorize(jac_);
            if (llt_.info() != Eigen::Success)
                throw SolverFailure("Jacobian factorization failed", res);
            const Vector step = llt_.solve(r);
            const double merit = r.norm();
            double lambda = 1.0;
            Vector trial = f.values;
            Vector rt;
            for (int halving = 0;; ++halving) {
                trial = f.values;
                for (std::size_t q = 0; q < nodes_.size(); ++q)
                    trial[static_cast<Eigen::Index>(nodes_[q])] -= lambda * step[static_cast<Eigen::Index>(q)];
                rt = residual(trial);
                if (rt.norm() <= merit || halving == opts_.max_halvings)
                    break;
                lambda *= 0.5;
            }
            f.values = std::move(trial);
            r = std::move(rt);
            res = r.lpNorm<Eigen::Infinity>();
            ++it;
        }
        f.report = {it, res};
        return f;
    }

    /// Discrete residual at interior nodes (unknown order).
    Vector residual(const Vector& u) const
    {
        Vector r(static_cast<Eigen::Index>(nodes_.size()));
        for (std::size_t q = 0; q < nodes_.size(); ++q) {
            const std::size_t k = nodes_[q];
            const auto [i, j] = ij(k);
            const double uk = u[static_cast<Eigen::Index>(k)];
            double acc = 0.0;
            for_each_face(i, j, [&](std::size_t nb, double af) { acc += af * (uk - u[static_cast<Eigen::Index>(nb)]); });
            r[static_cast<Eigen::Index>(q)] = acc + h_ * h_ * uk * uk * uk - source_[q];
        }
        return r;
    }

    /// Transfinite bilinear (Coons) interpolation of the perimeter trace.
    Vector coons(const Vector& trace) const
    {
        const auto per = perimeter_nodes(rect_);
        Vector edge = Vector::Zero(static_cast<Eigen::Index>(rect_.node_count()));
        for (std::size_t k = 0; k < per.size(); ++k) edge[static_cast<Eigen::Index>(rect_.local(per[k][0], per[k][1]))] = trace[static_cast<Eigen::Index>(k)];
        const auto at = [&](int i, int j) { return edge[static_cast<Eigen::Index>(rect_.local(i, j))]; };
        const double c00 = at(rect_.i0, rect_.j0), c10 = at(rect_.i1, rect_.j0);
        const double c01 = at(rect_.i0, rect_.j1), c11 = at(rect_.i1, rect_.j1);
        Vector out = edge;
        for (int j = rect_.j0 + 1; j < rect_.j1; ++j)
            for (int i = rect_.i0 + 1; i < rect_.i1; ++i) {
                const double s = static_cast<double>(i - rect_.i0) / rect_.nx();
                const double t = static_cast<double>(j - rect_.j0) / rect_.ny();
                out[static_cast<Eigen::Index>(rect_.local(i, j))] =
                    (1 - t) * at(i, rect_.j0) + t * at(i, rect_.j1) + (1 - s) * at(rect_.i0, j) + s * at(rect_.i1, j)
                    - ((1 - s) * (1 - t) * c00 + s * (1 - t) * c10 + (1 - s) * t * c01 + s * t * c11);
            }
        return out;
    }

private:
    std::pair<int, int> ij(std::size_t k) const
    {
        const int w = rect_.nx() + 1;
        return {rect_.i0 + static_cast<int>(k % static_cast<std::size_t>(w)), rect_.j0 + static_cast<int>(k / static_cast<std::size_t>(w))};
    }

    template <class F>
    void for_each_face(int i, int j, F&& f) const
    {
        const std::size_t k = rect_.local(i, j);
        f(rect_.local(i + 1, j), ax_[k]);
        f(rect_.local(i - 1, j), ax_[rect_.local(i - 1, j)]);
        f(rect_.local(i, j + 1), ay_[k]);
        f(rect_.local(i, j - 1), ay_[rect_.local(i, j - 1)]);
    }

    double stiffness_diag(std::size_t q) const
    {
        const auto [i, j] = ij(nodes_[q]);
        const std::size_t k = nodes_[q];
        return ax_[k] + ax_[rect_.local(i - 1, j)] + ay_[k] + ay_[rect_.local(i, j - 1)];
    }

    Grid2D grid_;
    IndexRect rect_;
    NewtonOptions opts_;
    double h_;
    std::vector<double> ax_, ay_;
    std::vector<int> unknown_;
    std::vector<std::size_t> nodes_;
    std::vector<double> source_;
    SpMat stiffness_, jac_;
    std::vector<Eigen::Index> diag_pos_;
    Eigen::SimplicialLLT<SpMat> llt_;
};

template <class MediaFn>
Field solve_local(const MediaFn& media, const Grid2D& grid, const IndexRect& rect, const Vector& trace,
                  NewtonOptions opts = {}, LocalSolver::SourceFn source = {})
{
    LocalSolver solver(media, grid, rect, opts, std::move(source));
    return solver.solve(trace);
}

template <class MediaFn>
Field solve_global(const MediaFn& media, const Grid2D& grid, const Vector& boundary, NewtonOptions opts = {})
{
    return solve_local(media, grid, IndexRect{0, grid.n, 0, grid.n}, boundary, opts);
}

/**
 * Weight matrix W of the discrete H^{1/2} norm on boundary nodes z_i:
 *   W_ii = h + sum_{j != i} 2h^2 / |z_i - z_j|^2,   W_ij = -2h^2 / |z_i - z_j|^2,
 * so that ||phi||_{1/2}^2 = phi^T W phi.
 */
inline Matrix h12_weight_matrix(const Matrix& z, double h)
{
    const Eigen::Index n = z.rows();
    Matrix W = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double diag = h;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j)
                continue;
            const double d2 = (z.row(i) - z.row(j)).squaredNorm();
            if (d2 == 0.0)
                throw ConfigError("h12_weight_matrix: duplicate boundary nodes");
            const double c = 2.0 * h * h / d2;
            W(i, j) = -c;
            diag += c;
        }
        W(i, i) = diag;
    }
    return W;
}

inline double h12_norm(const Vector& phi, const Matrix& W) { return std::sqrt(std::max(0.0, phi.dot(W * phi))); }

inline double h12_norm(const Vector& phi, const Matrix& z, double h) { return h12_norm(phi, h12_weight_matrix(z, h)); }

/// ||u|| = h sqrt(sum_ij |u_ij|^2).
inline double l2_norm_2d(const Vector& values, double h) { return h * values.norm(); }

/// Subsample a nodal field on an n_fine grid to the n_coarse grid (n_fine = k n_coarse).
inline Vector subsample(const Vector& fine, int n_fine, int n_coarse)
{
    if (n_coarse <= 0 || n_fine % n_coarse != 0)
        throw ConfigError("reference grid must be an integer refinement of the run grid");
    const int k = n_fine / n_coarse;
    const IndexRect cf{0, n_fine, 0, n_fine}, cc{0, n_coarse, 0, n_coarse};
    if (static_cast<std::size_t>(fine.size()) != cf.node_count())
        throw ConfigError("fine field size mismatch");
    Vector out(static_cast<Eigen::Index>(cc.node_count()));
    for (int j = 0; j <= n_coarse; ++j)
        for (int i = 0; i <= n_coarse; ++i) out[static_cast<Eigen::Index>(cc.local(i, j))] = fine[static_cast<Eigen::Index>(cf.local(k * i, k * j))];
    return out;
}

/// ||ref - approx|| / ||ref|| with both fields on the same grid.
inline double relative_error(const Vector& ref, const Vector& approx)
{
    if (ref.size() != approx.size())
        throw ConfigError("relative_error: size mismatch");
    const double den = ref.norm();
    if (den == 0.0)
        return (ref - approx).norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return (ref - approx).norm() / den;
}

/// Relative error with the reference on an integer refinement of the run grid.
inline double relative_error(const Vector& ref, int n_ref, const Vector& approx, int n_run)
{
    return relative_error(subsample(ref, n_ref, n_run), approx);
}

} // namespace tsdd::elliptic
