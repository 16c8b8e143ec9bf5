#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "tsdd/anderson.hpp"
#include "tsdd/error.hpp"
#include "tsdd/geometry.hpp"
#include "tsdd/patch_system.hpp"

/// Slab nonlinear radiative transfer: eps v I_x = T^4 - I, eps^2 T_xx = T^4 - <I>.
namespace tsdd::rte {

using Intensity = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FixedPointOpts {
    double tol = 1e-10;
    int max_iter = 500;
    int anderson_depth = 5;
    double anderson_damping = 1.0;
};

/// Solution on one interval: I over (node, velocity) and T over nodes.
struct Field {
    Intensity I;
    Vector T;
    int iterations = 0;
    std::vector<double> history;

    std::size_t nodes() const { return static_cast<std::size_t>(T.size()); }
    int nv() const { return static_cast<int>(I.cols()); }

    /// I row-major followed by T, matching rte_I_index / rte_T_index.
    Vector flatten() const
    {
        Vector out(I.size() + T.size());
        out.head(I.size()) = Eigen::Map<const Vector>(I.data(), I.size());
        out.tail(T.size()) = T;
        return out;
    }

    static Field unflatten(const Vector& v, int nv)
    {
        const auto nodes = v.size() / (nv + 1);
        if (nodes * (nv + 1) != v.size())
            throw ConfigError("RTE field vector has inconsistent length");
        Field f;
        f.I = Eigen::Map<const Intensity>(v.data(), nodes, nv);
        f.T = v.tail(nodes);
        return f;
    }
};

/// Build a trace (g1, g2, theta1, theta2) from its blocks.
inline Vector make_trace(const Vector& g1, const Vector& g2, double theta1, double theta2)
{
    Vector t(g1.size() + g2.size() + 2);
    t << g1, g2, theta1, theta2;
    return t;
}

/// g1(v > 0) = 3 + sin 2pi v at x = 0, g2(v < 0) = 2 + sin 2pi v at x = L, T(0) = 2, T(L) = 3.
inline Vector slab_boundary_data(const VelocityQuadrature& q)
{
    constexpr double tau = 2.0 * std::numbers::pi;
    const int half = q.half();
    Vector g1(half), g2(half);
    for (int k = 0; k < half; ++k) {
        g1[k] = 3.0 + std::sin(tau * q.v[static_cast<std::size_t>(half + k)]);
        g2[k] = 2.0 + std::sin(tau * q.v[static_cast<std::size_t>(k)]);
    }
    return make_trace(g1, g2, 2.0, 3.0);
}

/// Equilibrium trace g = c^4, theta = c.
inline Vector equilibrium_trace(const VelocityQuadrature& q, double c)
{
    const int nv = q.size();
    Vector t = Vector::Constant(nv + 2, c * c * c * c);
    t[nv] = c;
    t[nv + 1] = c;
    return t;
}

/// Weights of the exponential scheme I_next = E I + c_next s_next + c_prev s_prev.
struct SweepCoefficients {
    double E = 0.0;
    double c_next = 0.0;
    double c_prev = 0.0;
};

/// mu = dx / (eps |v|). Below mu = 1e-4 the cancelling combinations use their Taylor series.
inline SweepCoefficients sweep_coefficients(double mu)
{
    SweepCoefficients c;
    c.E = std::exp(-mu);
    if (mu < 1e-4) {
        const double m2 = mu * mu, m3 = m2 * mu, m4 = m3 * mu;
        c.c_next = mu / 2 - m2 / 6 + m3 / 24 - m4 / 120;
        c.c_prev = mu / 2 - m2 / 3 + m3 / 8 - m4 / 30;
    } else {
        const double phi = -std::expm1(-mu) / mu;  // (1 - E) / mu
        c.c_next = 1.0 - phi;
        c.c_prev = phi - c.E;
    }
    return c;
}

/**
 * Exponential-fitted characteristic sweep for every discrete velocity.
 *
 * For v_j > 0 the sweep marches left to right from the inflow g1, for
 * v_j < 0 right to left from g2; the source s = T^4 is taken piecewise linear
 * between nodes and integrated exactly along the characteristic.
 */
inline Intensity transport_sweep(const Vector& T, const Vector& trace, double eps, double dx, const VelocityQuadrature& q)
{
    const int nv = q.size(), half = nv / 2;
    const auto n = T.size();
    if (trace.size() != nv + 2)
        throw ConfigError("transport_sweep: trace length must be Nv + 2");
    if (!(eps > 0.0))
        throw ConfigError("transport_sweep: eps must be positive");
    const Vector s = T.array().square().square();
    Intensity I(n, nv);
    for (int j = 0; j < nv; ++j) {
        const double v = q.v[static_cast<std::size_t>(j)];
        const auto c = sweep_coefficients(dx / (eps * std::abs(v)));
        if (v > 0.0) {
            I(0, j) = trace[j - half];
            for (Eigen::Index i = 0; i + 1 < n; ++i)
                I(i + 1, j) = c.E * I(i, j) + c.c_next * s[i + 1] + c.c_prev * s[i];
        } else {
            I(n - 1, j) = trace[half + j];
            for (Eigen::Index i = n - 1; i > 0; --i)
                I(i - 1, j) = c.E * I(i, j) + c.c_next * s[i - 1] + c.c_prev * s[i];
        }
    }
    return I;
}

/// <I>_i = 1/2 sum_j w_j I_ij.
inline Vector velocity_average(const Intensity& I, const VelocityQuadrature& q)
{
    const Eigen::Map<const Vector> w(q.w.data(), static_cast<Eigen::Index>(q.w.size()));
    return 0.5 * (I * w);
}

/**
 * Residual of eps^2 (T_{i-1} - 2T_i + T_{i+1}) / dx^2 = T_i^4 - <I>_i, scaled
 * row-wise by the Jacobian diagonal 2 eps^2/dx^2 + 4 |T_i|^3 so that it is
 * measured in temperature units. Infinity norm over interior nodes.
 */
inline double temperature_residual(const Vector& T, const Vector& meanI, double eps, double dx)
{
    const double k = eps * eps / (dx * dx);
    double worst = 0.0;
    for (Eigen::Index i = 1; i + 1 < T.size(); ++i) {
        const double t = T[i];
        const double F = k * (T[i - 1] - 2.0 * t + T[i + 1]) - t * t * t * t + meanI[i];
        const double D = 2.0 * k + 4.0 * std::abs(t * t * t);
        worst = std::max(worst, std::abs(F) / D);
    }
    return worst;
}

struct TemperatureOpts {
    double tol = 1e-11;
    int max_iter = 100;
};

/// Tridiagonal solve (Thomas); sub, diag, sup, rhs are all length n.
inline Vector solve_tridiagonal(const Vector& sub, Vector diag, const Vector& sup, Vector rhs)
{
    const auto n = diag.size();
    for (Eigen::Index i = 1; i < n; ++i) {
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    Vector x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (Eigen::Index i = n - 2; i >= 0; --i) x[i] = (rhs[i] - sup[i] * x[i + 1]) / diag[i];
    return x;
}

/**
 * Solve the three-point temperature equation with Dirichlet ends by damped
 * Newton, each iterate clamped to the monotone bracket
 * [0, max(theta1, theta2, max <I>^{1/4})] formed by the constant sub- and
 * super-solutions.
 */
inline Vector temperature_solve(const Vector& meanI, double theta1, double theta2, double eps, double dx,
                                TemperatureOpts opts = {}, const Vector* initial = nullptr)
{
    const auto n = meanI.size();
    if (n < 2)
        throw ConfigError("temperature_solve: need at least two nodes");
    if (theta1 < 0.0 || theta2 < 0.0 || (meanI.array() < 0.0).any())
        throw ConfigError("temperature_solve: data must be nonnegative");
    const double tmax = std::max({theta1, theta2, std::pow(meanI.maxCoeff(), 0.25)});
    const double k = eps * eps / (dx * dx);

    Vector T(n);
    if (initial && initial->size() == n) {
        T = initial->cwiseMax(0.0).cwiseMin(tmax);
    } else {
        for (Eigen::Index i = 0; i < n; ++i) T[i] = std::pow(meanI[i], 0.25);
    }
    T[0] = theta1;
    T[n - 1] = theta2;
    if (n == 2)
        return T;

    const auto F = [&](const Vector& t) {
        Vector f = Vector::Zero(n);
        for (Eigen::Index i = 1; i + 1 < n; ++i)
            f[i] = k * (t[i - 1] - 2.0 * t[i] + t[i + 1]) - t[i] * t[i] * t[i] * t[i] + meanI[i];
        return f;
    };
    const auto scaled_norm = [&](const Vector& t, const Vector& f) {
        double acc = 0.0;
        for (Eigen::Index i = 1; i + 1 < n; ++i) {
            const double r = f[i] / (2.0 * k + 4.0 * std::abs(t[i] * t[i] * t[i]));
            acc += r * r;
        }
        return std::sqrt(acc);
    };

    Vector f = F(T);
    double res = temperature_residual(T, meanI, eps, dx);
    const auto m = n - 2;
    Vector sub(m), diag(m), sup(m), rhs(m);
    for (int it = 0; res > opts.tol; ++it) {
        if (it == opts.max_iter)
            throw SolverFailure("temperature Newton iteration did not converge", res);
        for (Eigen::Index r = 0; r < m; ++r) {
            const double t = T[r + 1];
            diag[r] = -2.0 * k - 4.0 * t * t * t;
            sub[r] = r > 0 ? k : 0.0;
            sup[r] = r + 1 < m ? k : 0.0;
            rhs[r] = -f[r + 1];
        }
        const Vector delta = solve_tridiagonal(sub, diag, sup, rhs);
        const double merit = scaled_norm(T, f);
        double lambda = 1.0;
        Vector trial, ft;
        for (int halving = 0;; ++halving) {
            trial = T;
            for (Eigen::Index r = 0; r < m; ++r) trial[r + 1] = std::clamp(T[r + 1] + lambda * delta[r], 0.0, tmax);
            ft = F(trial);
            if (scaled_norm(trial, ft) <= merit || halving == 30)
                break;
            lambda *= 0.5;
        }
        T = std::move(trial);
        f = std::move(ft);
        res = temperature_residual(T, meanI, eps, dx);
    }
    return T;
}

/// Discrete L2 norm with weights (trapezoid in x, Gauss-Legendre in v).
inline double rte_l2_norm(const Field& f, double dx, const VelocityQuadrature& q)
{
    return weighted_norm(f.flatten(), rte_field_weights(f.nodes(), dx, q));
}

/// Trace norm sqrt(sum_j w_j |g_j|^2 + theta1^2 + theta2^2).
inline double rte_trace_norm(const Vector& trace, const VelocityQuadrature& q)
{
    return weighted_norm(trace, rte_trace_weights(q));
}

/// Discrete L2 norm of T alone (trapezoid weights).
inline double temperature_norm(const Vector& T, double dx)
{
    double acc = 0.0;
    for (Eigen::Index i = 0; i < T.size(); ++i) {
        const double w = (i == 0 || i + 1 == T.size()) ? 0.5 * dx : dx;
        acc += w * T[i] * T[i];
    }
    return std::sqrt(acc);
}

/**
 * Local RTE solve on an interval with `nodes` nodes: alternate the transport
 * sweep (given T) and the temperature solve (given <I>), accelerating the
 * T-map with Anderson mixing, until the relative L2 change of T is <= tol.
 */
inline Field solve_local_rte(std::size_t nodes, double dx, const VelocityQuadrature& q, const Vector& trace, double eps,
                             const FixedPointOpts& opts = {}, const Vector* initial_T = nullptr)
{
    const int nv = q.size();
    if (trace.size() != nv + 2)
        throw ConfigError("solve_local_rte: trace length must be Nv + 2");
    if (nodes < 2)
        throw ConfigError("solve_local_rte: need at least two nodes");
    if (!(opts.tol > 0.0) || opts.anderson_depth < 0)
        throw ConfigError("solve_local_rte: invalid fixed-point options");
    const double theta1 = trace[nv], theta2 = trace[nv + 1];
    const auto n = static_cast<Eigen::Index>(nodes);

    Vector T(n);
    if (initial_T && initial_T->size() == n) {
        T = initial_T->cwiseMax(0.0);
    } else {
        for (Eigen::Index i = 0; i < n; ++i) T[i] = theta1 + (theta2 - theta1) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    T[0] = theta1;
    T[n - 1] = theta2;

    AndersonMixer mixer(opts.anderson_depth, opts.anderson_damping);
    Field out;
    for (int it = 1;; ++it) {
        const Intensity I = transport_sweep(T, trace, eps, dx, q);
        const Vector meanI = velocity_average(I, q).cwiseMax(0.0);
        const Vector Tn = temperature_solve(meanI, theta1, theta2, eps, dx, {}, &T);
        const double denom = temperature_norm(Tn, dx);
        const double change = temperature_norm(Tn - T, dx) / (denom > 0.0 ? denom : 1.0);
        out.history.push_back(change);
        if (change <= opts.tol) {
            out.T = Tn;
            out.iterations = it;
            break;
        }
        if (it == opts.max_iter)
            throw SolverFailure("RTE fixed-point iteration did not converge", change, out.history);
        T = mixer.update(T, Tn).cwiseMax(0.0);
        T[0] = theta1;
        T[n - 1] = theta2;
    }
    out.I = transport_sweep(out.T, trace, eps, dx, q);
    return out;
}

/// Trace (g1, g2, theta1, theta2) of a field on its own interval.
inline Vector extract_trace(const Field& f)
{
    const int nv = f.nv(), half = nv / 2;
    const auto last = static_cast<Eigen::Index>(f.nodes()) - 1;
    Vector t(nv + 2);
    for (int k = 0; k < half; ++k) {
        t[k] = f.I(0, half + k);
        t[half + k] = f.I(last, k);
    }
    t[nv] = f.T[0];
    t[nv + 1] = f.T[last];
    return t;
}

/// Restriction of a field on nodes [outer0, ...] to the sub-interval `inner` (global node indices).
inline Field confine(const Field& f, int outer_i0, const IndexInterval& inner)
{
    const auto off = static_cast<Eigen::Index>(inner.i0 - outer_i0);
    const auto n = static_cast<Eigen::Index>(inner.node_count());
    if (off < 0 || off + n > static_cast<Eigen::Index>(f.nodes()))
        throw StructuralError("confine: inner interval not contained in outer");
    Field out;
    out.I = f.I.middleRows(off, n);
    out.T = f.T.segment(off, n);
    out.iterations = f.iterations;
    return out;
}

} // namespace tsdd::rte
