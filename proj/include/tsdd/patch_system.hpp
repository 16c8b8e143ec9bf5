#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "tsdd/geometry.hpp"

namespace tsdd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline double weighted_norm(const Vector& v, const Vector& w) { return std::sqrt((w.array() * v.array().square()).sum()); }

inline double weighted_dist2(const Vector& a, const Vector& b, const Vector& w)
{
    return (w.array() * (a - b).array().square()).sum();
}

/// Everything the Schwarz loop needs to know about one patch, independent of the PDE.
struct PatchBlock {
    std::size_t field_size = 0;
    Vector trace_weights;                  ///< discrete L2 metric on dOmega_m
    Vector field_weights;                  ///< discrete L2 metric on Omega_m
    std::vector<TraceSource> sources;      ///< per trace entry
    std::vector<std::size_t> global_index; ///< per field entry
    Vector pou;                            ///< chi_m per field entry
};

/// Problem-agnostic view of a layout: trace/field shapes, metrics, exchange maps, assembly maps.
struct PatchSystem {
    std::vector<PatchBlock> patches;
    std::size_t global_field_size = 0;
    Vector global_field_weights;
    std::size_t boundary_size = 0;

    std::size_t size() const { return patches.size(); }
    bool has_interfaces() const
    {
        for (const auto& p : patches)
            for (const auto& s : p.sources)
                if (!s.is_physical())
                    return true;
        return false;
    }
};

/// Node-array weights giving ||u|| = h sqrt(sum u_ij^2).
inline Vector elliptic_field_weights(const IndexRect& r, double h)
{
    return Vector::Constant(static_cast<Eigen::Index>(r.node_count()), h * h);
}

/// Trace weights giving ||phi|| = sqrt(h sum phi_i^2).
inline Vector elliptic_trace_weights(const IndexRect& r, double h)
{
    return Vector::Constant(static_cast<Eigen::Index>(r.perimeter_count()), h);
}

/// Trapezoid-in-x, Gauss-Legendre-in-v weights for (I, T) fields.
inline Vector rte_field_weights(std::size_t nodes, double dx, const VelocityQuadrature& q)
{
    const int nv = q.size();
    Vector w(static_cast<Eigen::Index>(nodes * static_cast<std::size_t>(nv + 1)));
    for (std::size_t a = 0; a < nodes; ++a) {
        const double wx = (a == 0 || a + 1 == nodes) ? 0.5 * dx : dx;
        for (int j = 0; j < nv; ++j) w[static_cast<Eigen::Index>(rte_I_index(a, j, nv))] = wx * q.w[static_cast<std::size_t>(j)];
        w[static_cast<Eigen::Index>(rte_T_index(a, nodes, nv))] = wx;
    }
    return w;
}

/// Weights of the trace norm sum_j w_j |g_j|^2 + theta1^2 + theta2^2 in (g1, g2, theta1, theta2) order.
inline Vector rte_trace_weights(const VelocityQuadrature& q)
{
    const int nv = q.size(), half = nv / 2;
    Vector w(nv + 2);
    for (int k = 0; k < half; ++k) {
        w[k] = q.w[static_cast<std::size_t>(half + k)];
        w[half + k] = q.w[static_cast<std::size_t>(k)];
    }
    w[nv] = 1.0;
    w[nv + 1] = 1.0;
    return w;
}

inline PatchSystem make_patch_system(const PatchLayout2D& lay)
{
    const double h = lay.grid.h();
    const auto pou = build_partition_of_unity(lay);
    const IndexRect dom = lay.domain();
    PatchSystem sys;
    sys.global_field_size = dom.node_count();
    sys.global_field_weights = elliptic_field_weights(dom, h);
    sys.boundary_size = dom.perimeter_count();
    for (std::size_t m = 0; m < lay.size(); ++m) {
        const auto& r = lay.patches[m];
        PatchBlock b;
        b.field_size = r.node_count();
        b.trace_weights = elliptic_trace_weights(r, h);
        b.field_weights = elliptic_field_weights(r, h);
        b.sources = lay.sources[m];
        b.global_index.resize(b.field_size);
        for (int j = r.j0; j <= r.j1; ++j)
            for (int i = r.i0; i <= r.i1; ++i) b.global_index[r.local(i, j)] = dom.local(i, j);
        b.pou = Eigen::Map<const Vector>(pou.weights[m].data(), static_cast<Eigen::Index>(pou.weights[m].size()));
        sys.patches.push_back(std::move(b));
    }
    return sys;
}

inline PatchSystem make_patch_system(const PatchLayout1D& lay)
{
    const double dx = lay.grid.dx();
    const auto& q = lay.grid.quad;
    const int nv = q.size();
    const auto pou = build_partition_of_unity(lay);
    const std::size_t gnodes = static_cast<std::size_t>(lay.grid.Nx + 1);
    PatchSystem sys;
    sys.global_field_size = gnodes * static_cast<std::size_t>(nv + 1);
    sys.global_field_weights = rte_field_weights(gnodes, dx, q);
    sys.boundary_size = lay.trace_size();
    for (std::size_t m = 0; m < lay.size(); ++m) {
        const auto& p = lay.patches[m];
        const std::size_t nodes = p.node_count();
        PatchBlock b;
        b.field_size = lay.field_size(static_cast<int>(m));
        b.trace_weights = rte_trace_weights(q);
        b.field_weights = rte_field_weights(nodes, dx, q);
        b.sources = lay.sources[m];
        b.global_index.resize(b.field_size);
        b.pou.resize(static_cast<Eigen::Index>(b.field_size));
        for (std::size_t a = 0; a < nodes; ++a) {
            const std::size_t g = static_cast<std::size_t>(p.i0) + a;
            const double chi = pou.weights[m][a];
            for (int j = 0; j < nv; ++j) {
                b.global_index[rte_I_index(a, j, nv)] = rte_I_index(g, j, nv);
                b.pou[static_cast<Eigen::Index>(rte_I_index(a, j, nv))] = chi;
            }
            b.global_index[rte_T_index(a, nodes, nv)] = rte_T_index(g, gnodes, nv);
            b.pou[static_cast<Eigen::Index>(rte_T_index(a, nodes, nv))] = chi;
        }
        sys.patches.push_back(std::move(b));
    }
    return sys;
}

} // namespace tsdd
