#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <gsl/gsl_integration.h>

#include "tsdd/error.hpp"

namespace tsdd {

/// Number of mesh cells spanned by `length`; throws unless it is an integer multiple of `step`.
inline int aligned_cells(double length, double step, const std::string& what)
{
    if (!(step > 0.0))
        throw ConfigError(what + ": mesh width must be positive");
    if (length < 0.0)
        throw ConfigError(what + ": width must be nonnegative");
    const double ratio = length / step;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
        throw ConfigError(what + " = " + std::to_string(length) + " is not a multiple of the mesh width "
                          + std::to_string(step));
    return static_cast<int>(rounded);
}

/// Uniform square grid on [0, L]^2 with nodes x_i = i h, i = 0..n.
struct Grid2D {
    double L = 1.0;
    int n = 0;

    Grid2D() = default;
    Grid2D(double length, double h) : L(length), n(aligned_cells(length, h, "domain length"))
    {
        if (n < 4)
            throw ConfigError("Grid2D needs at least 4 cells per side");
    }

    double h() const { return L / n; }
    double coord(int i) const { return L * static_cast<double>(i) / n; }
    int nodes_per_side() const { return n + 1; }
};

/// Gauss-Legendre nodes and weights on (-1, 1), nodes ascending.
struct VelocityQuadrature {
    std::vector<double> v;
    std::vector<double> w;

    VelocityQuadrature() = default;
    explicit VelocityQuadrature(int count)
    {
        if (count < 2 || count % 2 != 0)
            throw ConfigError("velocity node count must be even and >= 2");
        std::unique_ptr<gsl_integration_glfixed_table, decltype(&gsl_integration_glfixed_table_free)> table(
            gsl_integration_glfixed_table_alloc(static_cast<std::size_t>(count)),
            &gsl_integration_glfixed_table_free);
        if (!table)
            throw std::runtime_error("gsl_integration_glfixed_table_alloc failed");
        std::vector<std::pair<double, double>> nodes(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i)
            gsl_integration_glfixed_point(-1.0, 1.0, static_cast<std::size_t>(i), &nodes[i].first,
                                          &nodes[i].second, table.get());
        std::sort(nodes.begin(), nodes.end());
        for (auto [x, wt] : nodes) {
            v.push_back(x);
            w.push_back(wt);
        }
    }

    int size() const { return static_cast<int>(v.size()); }
    int half() const { return size() / 2; }
};

/// Uniform slab grid on [0, L] with nodes x_i = i dx, i = 0..Nx, and a velocity quadrature.
struct Grid1D {
    double L = 1.0;
    int Nx = 0;
    VelocityQuadrature quad;

    Grid1D() = default;
    Grid1D(double length, double dx, int velocity_nodes)
        : L(length), Nx(aligned_cells(length, dx, "slab length")), quad(velocity_nodes)
    {
        if (Nx < 2)
            throw ConfigError("Grid1D needs at least 2 cells");
    }

    double dx() const { return L / Nx; }
    double coord(int i) const { return L * static_cast<double>(i) / Nx; }
    int Nv() const { return quad.size(); }
};

} // namespace tsdd
