#pragma once

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsdd/elliptic.hpp"
#include "tsdd/error.hpp"
#include "tsdd/geometry.hpp"
#include "tsdd/patch_system.hpp"
#include "tsdd/rte.hpp"

namespace tsdd {

/// Position of physical node (i, j) in `perimeter_nodes` order of the n x n domain.
inline std::size_t global_perimeter_index(int n, int i, int j)
{
    if (j == 0 && i < n) return static_cast<std::size_t>(i);
    if (i == n && j < n) return static_cast<std::size_t>(n + j);
    if (j == n && i > 0) return static_cast<std::size_t>(2 * n + (n - i));
    if (i == 0 && j > 0) return static_cast<std::size_t>(3 * n + (n - j));
    throw StructuralError("node is not on the domain boundary");
}

/// Elliptic instance: layout, medium, physical data and solver settings.
struct EllipticProblem {
    PatchLayout2D layout;
    double eps = 1.0;
    Vector boundary;
    elliptic::NewtonOptions newton;
    PatchSystem system;

    EllipticProblem(PatchLayout2D lay, double eps_, Vector boundary_, elliptic::NewtonOptions opts = {})
        : layout(std::move(lay)), eps(eps_), boundary(std::move(boundary_)), newton(opts),
          system(make_patch_system(layout))
    {
        if (!(eps > 0.0))
            throw ConfigError("eps must be positive");
        if (static_cast<std::size_t>(boundary.size()) != system.boundary_size)
            throw ConfigError("global boundary data does not match the grid perimeter");
    }

    elliptic::OscillatoryMedia media() const { return {eps}; }
    double h() const { return layout.grid.h(); }

    nlohmann::json describe() const
    {
        return {{"problem", "elliptic"},
                {"eps", eps},
                {"L", layout.grid.L},
                {"h", h()},
                {"n", layout.grid.n},
                {"M1", layout.M1},
                {"M2", layout.M2},
                {"overlap", layout.overlap_cells * h()},
                {"buffer", layout.buffer_cells * h()},
                {"newton_tol", newton.tol}};
    }
};

/// Slab transport instance.
struct RteProblem {
    PatchLayout1D layout;
    double eps = 1.0;
    Vector boundary;
    rte::FixedPointOpts fixed_point;
    PatchSystem system;

    RteProblem(PatchLayout1D lay, double eps_, Vector boundary_, rte::FixedPointOpts opts = {})
        : layout(std::move(lay)), eps(eps_), boundary(std::move(boundary_)), fixed_point(opts),
          system(make_patch_system(layout))
    {
        if (!(eps > 0.0))
            throw ConfigError("eps must be positive");
        if (static_cast<std::size_t>(boundary.size()) != system.boundary_size)
            throw ConfigError("slab boundary data must have Nv + 2 entries");
    }

    const VelocityQuadrature& quad() const { return layout.grid.quad; }
    double dx() const { return layout.grid.dx(); }

    nlohmann::json describe() const
    {
        return {{"problem", "rte"},
                {"eps", eps},
                {"L", layout.grid.L},
                {"dx", dx()},
                {"Nx", layout.grid.Nx},
                {"Nv", layout.Nv()},
                {"M", layout.M},
                {"overlap", layout.overlap_cells * dx()},
                {"buffer", layout.buffer_cells * dx()},
                {"fixed_point_tol", fixed_point.tol},
                {"anderson_depth", fixed_point.anderson_depth}};
    }
};

/// True local solves on the unbuffered patches; one factorization pattern per patch.
class EllipticClassicalMap {
public:
    explicit EllipticClassicalMap(const EllipticProblem& p)
    {
        for (const auto& r : p.layout.patches)
            solvers_.push_back(std::make_unique<elliptic::LocalSolver>(p.media(), p.layout.grid, r, p.newton));
    }

    Vector operator()(int m, const Vector& trace, const Vector* previous)
    {
        return solvers_[static_cast<std::size_t>(m)]->solve(trace, previous).values;
    }

private:
    std::vector<std::unique_ptr<elliptic::LocalSolver>> solvers_;
};

class RteClassicalMap {
public:
    explicit RteClassicalMap(const RteProblem& p) : p_(&p) {}

    Vector operator()(int m, const Vector& trace, const Vector* previous) const
    {
        const auto nodes = p_->layout.patches[static_cast<std::size_t>(m)].node_count();
        Vector T0;
        if (previous)
            T0 = previous->tail(static_cast<Eigen::Index>(nodes));
        const auto f = rte::solve_local_rte(nodes, p_->dx(), p_->quad(), trace, p_->eps, p_->fixed_point,
                                            previous ? &T0 : nullptr);
        return f.flatten();
    }

private:
    const RteProblem* p_;
};

/// Monolithic elliptic solve on [0, L]^2 with mesh h and the oscillating boundary data.
inline Vector elliptic_reference(double eps, double L, double h, elliptic::NewtonOptions opts = {})
{
    const Grid2D grid(L, h);
    return elliptic::solve_global(elliptic::OscillatoryMedia{eps}, grid, elliptic::oscillating_boundary_data(grid), opts)
        .values;
}

/// Monolithic slab solve with the standard inflow data.
inline Vector rte_reference(double eps, const Grid1D& grid, const rte::FixedPointOpts& opts = {})
{
    return rte::solve_local_rte(static_cast<std::size_t>(grid.Nx + 1), grid.dx(), grid.quad,
                                rte::slab_boundary_data(grid.quad), eps, opts)
        .flatten();
}

} // namespace tsdd
