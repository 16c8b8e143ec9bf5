#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsdd/error.hpp"
#include "tsdd/grid.hpp"

namespace tsdd {

/// Closed node-index rectangle [i0, i1] x [j0, j1] on a Grid2D.
struct IndexRect {
    int i0 = 0, i1 = 0, j0 = 0, j1 = 0;

    int nx() const { return i1 - i0; }
    int ny() const { return j1 - j0; }
    std::size_t node_count() const { return static_cast<std::size_t>(nx() + 1) * static_cast<std::size_t>(ny() + 1); }
    std::size_t perimeter_count() const { return static_cast<std::size_t>(2 * (nx() + ny())); }
    bool contains(int i, int j) const { return i >= i0 && i <= i1 && j >= j0 && j <= j1; }
    bool on_boundary(int i, int j) const { return contains(i, j) && (i == i0 || i == i1 || j == j0 || j == j1); }
    /// Row-major local index, x fastest.
    std::size_t local(int i, int j) const
    {
        return static_cast<std::size_t>(i - i0) + static_cast<std::size_t>(nx() + 1) * static_cast<std::size_t>(j - j0);
    }
    bool operator==(const IndexRect&) const = default;
};

/// Closed node-index interval [i0, i1] on a Grid1D.
struct IndexInterval {
    int i0 = 0, i1 = 0;

    int cells() const { return i1 - i0; }
    std::size_t node_count() const { return static_cast<std::size_t>(i1 - i0 + 1); }
    bool contains(int i) const { return i >= i0 && i <= i1; }
    bool operator==(const IndexInterval&) const = default;
};

/// Perimeter nodes counterclockwise from the southwest corner, corners once.
inline std::vector<std::array<int, 2>> perimeter_nodes(const IndexRect& r)
{
    std::vector<std::array<int, 2>> out;
    out.reserve(r.perimeter_count());
    for (int i = r.i0; i < r.i1; ++i) out.push_back({i, r.j0});
    for (int j = r.j0; j < r.j1; ++j) out.push_back({r.i1, j});
    for (int i = r.i1; i > r.i0; --i) out.push_back({i, r.j1});
    for (int j = r.j1; j > r.j0; --j) out.push_back({r.i0, j});
    return out;
}

/// Where one boundary-trace entry of a patch comes from during Schwarz updates.
struct TraceSource {
    static constexpr int physical = -1;
    int patch = physical;   ///< neighbor patch, or `physical` for prescribed global data
    std::size_t index = 0;  ///< field index in the neighbor, or index into global boundary data

    bool is_physical() const { return patch == physical; }
    bool operator==(const TraceSource&) const = default;
};

/// Grid indices of dOmega_m ∩ Omega_l: positions in m's trace and matching field indices in l.
struct TraceSegment {
    std::vector<std::size_t> trace_pos;
    std::vector<std::size_t> field_index;
    bool operator==(const TraceSegment&) const = default;
};

namespace detail {

inline void collect_segments(const std::vector<std::vector<TraceSource>>& sources,
                             std::map<std::pair<int, int>, TraceSegment>& segments)
{
    for (std::size_t m = 0; m < sources.size(); ++m) {
        for (std::size_t k = 0; k < sources[m].size(); ++k) {
            const auto& s = sources[m][k];
            if (s.is_physical())
                continue;
            auto& seg = segments[{static_cast<int>(m), s.patch}];
            seg.trace_pos.push_back(k);
            seg.field_index.push_back(s.index);
        }
    }
}

/// 1D ramp factor for a patch side sitting on interface `core` with half-band `o` cells.
inline double ramp_up(int i, int core, int o)
{
    if (o == 0)
        return i < core ? 0.0 : (i == core ? 0.5 : 1.0);
    const double t = static_cast<double>(i - (core - o)) / (2.0 * o);
    return std::clamp(t, 0.0, 1.0);
}

inline double ramp_down(int i, int core, int o)
{
    if (o == 0)
        return i > core ? 0.0 : (i == core ? 0.5 : 1.0);
    const double t = static_cast<double>((core + o) - i) / (2.0 * o);
    return std::clamp(t, 0.0, 1.0);
}

} // namespace detail

// ---------------------------------------------------------------------------
// 2D layout
// ---------------------------------------------------------------------------

/**
 * Overlapping M1 x M2 decomposition of [0, L]^2.
 *
 * Patch m = (m1, m2) is stored at linear index (m1 - 1) + M1 (m2 - 1). Traces
 * are the perimeter node values of the patch in `perimeter_nodes` order; the
 * field is the full node array of the patch. Global boundary data is the
 * perimeter of the whole grid in the same order.
 */
struct PatchLayout2D {
    Grid2D grid;
    int M1 = 1, M2 = 1;
    int overlap_cells = 0;
    int buffer_cells = 0;
    std::vector<int> core_x;  ///< interface node indices, size M1 + 1
    std::vector<int> core_y;
    std::vector<IndexRect> patches;
    std::vector<IndexRect> buffered;
    std::vector<std::vector<int>> neighbors;
    std::vector<std::vector<TraceSource>> sources;
    std::map<std::pair<int, int>, TraceSegment> segments;
    std::vector<std::string> warnings;

    std::size_t size() const { return patches.size(); }
    int index(int m1, int m2) const { return (m1 - 1) + M1 * (m2 - 1); }
    std::array<int, 2> multi_index(int m) const { return {m % M1 + 1, m / M1 + 1}; }
    IndexRect domain() const { return {0, grid.n, 0, grid.n}; }
    bool is_physical(int i, int j) const { return i == 0 || j == 0 || i == grid.n || j == grid.n; }
    bool touches_boundary(int m) const
    {
        const auto& r = patches[static_cast<std::size_t>(m)];
        return r.i0 == 0 || r.j0 == 0 || r.i1 == grid.n || r.j1 == grid.n;
    }
    bool operator==(const PatchLayout2D& o) const
    {
        return grid.L == o.grid.L && grid.n == o.grid.n && M1 == o.M1 && M2 == o.M2
               && overlap_cells == o.overlap_cells && buffer_cells == o.buffer_cells && patches == o.patches
               && buffered == o.buffered && neighbors == o.neighbors && sources == o.sources
               && segments == o.segments;
    }
};

inline PatchLayout2D build_layout_2d(const Grid2D& grid, int M1, int M2, double overlap, double buffer)
{
    if (M1 < 1 || M2 < 1)
        throw ConfigError("patch counts must be positive");
    PatchLayout2D lay;
    lay.grid = grid;
    lay.M1 = M1;
    lay.M2 = M2;
    const double h = grid.h();
    lay.overlap_cells = aligned_cells(overlap, h, "overlap width");
    lay.buffer_cells = aligned_cells(buffer, h, "buffer width");
    if (grid.n % M1 != 0 || grid.n % M2 != 0)
        throw ConfigError("grid cells per side must be divisible by the patch counts");
    const int wx = grid.n / M1, wy = grid.n / M2;
    const int o = lay.overlap_cells, b = lay.buffer_cells;
    if ((M1 > 1 && 2 * o > wx) || (M2 > 1 && 2 * o > wy))
        throw ConfigError("overlap bands of adjacent interfaces intersect; reduce the overlap width");
    if (o == 0 && M1 * M2 > 1)
        lay.warnings.emplace_back("zero overlap: Schwarz exchange carries no new interface information");

    for (int k = 0; k <= M1; ++k) lay.core_x.push_back(k * wx);
    for (int k = 0; k <= M2; ++k) lay.core_y.push_back(k * wy);

    const int n = grid.n;
    for (int m2 = 1; m2 <= M2; ++m2) {
        for (int m1 = 1; m1 <= M1; ++m1) {
            IndexRect r{std::max(lay.core_x[m1 - 1] - o, 0), std::min(lay.core_x[m1] + o, n),
                        std::max(lay.core_y[m2 - 1] - o, 0), std::min(lay.core_y[m2] + o, n)};
            if (r.nx() < 1 || r.ny() < 1)
                throw ConfigError("empty patch");
            IndexRect rb = r;
            if (rb.i0 > 0) rb.i0 = std::max(rb.i0 - b, 0);
            if (rb.j0 > 0) rb.j0 = std::max(rb.j0 - b, 0);
            if (rb.i1 < n) rb.i1 = std::min(rb.i1 + b, n);
            if (rb.j1 < n) rb.j1 = std::min(rb.j1 + b, n);
            lay.patches.push_back(r);
            lay.buffered.push_back(rb);

            std::vector<int> nb;
            if (m2 > 1) nb.push_back(lay.index(m1, m2 - 1));
            if (m1 > 1) nb.push_back(lay.index(m1 - 1, m2));
            if (m1 < M1) nb.push_back(lay.index(m1 + 1, m2));
            if (m2 < M2) nb.push_back(lay.index(m1, m2 + 1));
            std::sort(nb.begin(), nb.end());
            lay.neighbors.push_back(std::move(nb));
        }
    }

    // Global perimeter position of each physical boundary node.
    std::map<std::array<int, 2>, std::size_t> global_pos;
    {
        const auto gp = perimeter_nodes(lay.domain());
        for (std::size_t k = 0; k < gp.size(); ++k) global_pos[gp[k]] = k;
    }

    const auto depth = [&](const IndexRect& r, int i, int j) {
        int d = std::numeric_limits<int>::max();
        if (r.i0 > 0) d = std::min(d, i - r.i0);
        if (r.i1 < n) d = std::min(d, r.i1 - i);
        if (r.j0 > 0) d = std::min(d, j - r.j0);
        if (r.j1 < n) d = std::min(d, r.j1 - j);
        return d;
    };

    lay.sources.resize(lay.size());
    for (std::size_t m = 0; m < lay.size(); ++m) {
        for (const auto& node : perimeter_nodes(lay.patches[m])) {
            const int i = node[0], j = node[1];
            if (lay.is_physical(i, j)) {
                lay.sources[m].push_back({TraceSource::physical, global_pos.at(node)});
                continue;
            }
            int best = -1, best_depth = -1;
            for (int l : lay.neighbors[m]) {
                const auto& rl = lay.patches[static_cast<std::size_t>(l)];
                if (!rl.contains(i, j))
                    continue;
                const int d = depth(rl, i, j);
                if (d > best_depth) {
                    best_depth = d;
                    best = l;
                }
            }
            if (best < 0)
                throw StructuralError("patch boundary node not covered by any neighbor");
            lay.sources[m].push_back({best, lay.patches[static_cast<std::size_t>(best)].local(i, j)});
        }
    }
    detail::collect_segments(lay.sources, lay.segments);
    return lay;
}

// ---------------------------------------------------------------------------
// 1D (slab) layout for the transport problem
// ---------------------------------------------------------------------------

/**
 * Overlapping decomposition of the slab [0, L] into M patches: half-width end
 * patches and full-width interior patches, each enlarged by the overlap except
 * at the physical ends.
 *
 * Traces are ordered (g1: I(t, v_j > 0), g2: I(s, v_j < 0), theta1 = T(t),
 * theta2 = T(s)), length Nv + 2. Fields store I row-major over
 * (node, velocity) followed by T over nodes.
 */
struct PatchLayout1D {
    Grid1D grid;
    int M = 1;
    int overlap_cells = 0;
    int buffer_cells = 0;
    std::vector<int> core;  ///< interface node indices, size M + 1
    std::vector<IndexInterval> patches;
    std::vector<IndexInterval> buffered;
    std::vector<std::vector<int>> neighbors;
    std::vector<std::vector<TraceSource>> sources;
    std::map<std::pair<int, int>, TraceSegment> segments;
    std::vector<std::string> warnings;

    std::size_t size() const { return patches.size(); }
    int Nv() const { return grid.Nv(); }
    std::size_t trace_size() const { return static_cast<std::size_t>(Nv() + 2); }
    static std::size_t field_size(const IndexInterval& iv, int nv)
    {
        return iv.node_count() * static_cast<std::size_t>(nv + 1);
    }
    std::size_t field_size(int m) const { return field_size(patches[static_cast<std::size_t>(m)], Nv()); }
    bool touches_boundary(int m) const
    {
        const auto& p = patches[static_cast<std::size_t>(m)];
        return p.i0 == 0 || p.i1 == grid.Nx;
    }
    bool operator==(const PatchLayout1D& o) const
    {
        return grid.L == o.grid.L && grid.Nx == o.grid.Nx && grid.quad.v == o.grid.quad.v && M == o.M
               && overlap_cells == o.overlap_cells && buffer_cells == o.buffer_cells && patches == o.patches
               && buffered == o.buffered && neighbors == o.neighbors && sources == o.sources
               && segments == o.segments;
    }
};

/// Field index of I(node a, velocity j) and T(node a) in a 1D patch field with `nodes` nodes.
inline std::size_t rte_I_index(std::size_t a, int j, int nv) { return a * static_cast<std::size_t>(nv) + static_cast<std::size_t>(j); }
inline std::size_t rte_T_index(std::size_t a, std::size_t nodes, int nv) { return nodes * static_cast<std::size_t>(nv) + a; }

inline PatchLayout1D build_layout_1d(const Grid1D& grid, int M, double overlap, double buffer)
{
    if (M < 1)
        throw ConfigError("patch count must be positive");
    PatchLayout1D lay;
    lay.grid = grid;
    lay.M = M;
    const double dx = grid.dx();
    lay.overlap_cells = aligned_cells(overlap, dx, "overlap width");
    lay.buffer_cells = aligned_cells(buffer, dx, "buffer width");
    const int n = grid.Nx, o = lay.overlap_cells, b = lay.buffer_cells;

    lay.core.push_back(0);
    if (M > 1) {
        if (n % (2 * (M - 1)) != 0)
            throw ConfigError("slab cell count must be divisible by 2(M-1)");
        const int half = n / (2 * (M - 1));
        for (int k = 1; k < M; ++k) lay.core.push_back((2 * k - 1) * half);
        if (2 * o > half)
            throw ConfigError("overlap bands of adjacent interfaces intersect; reduce the overlap width");
    }
    lay.core.push_back(n);
    if (o == 0 && M > 1)
        lay.warnings.emplace_back("zero overlap: Schwarz exchange carries no new interface information");

    for (int m = 0; m < M; ++m) {
        IndexInterval p{std::max(lay.core[m] - o, 0), std::min(lay.core[m + 1] + o, n)};
        if (p.cells() < 1)
            throw ConfigError("empty patch");
        IndexInterval pb = p;
        if (pb.i0 > 0) pb.i0 = std::max(pb.i0 - b, 0);
        if (pb.i1 < n) pb.i1 = std::min(pb.i1 + b, n);
        lay.patches.push_back(p);
        lay.buffered.push_back(pb);
        std::vector<int> nb;
        if (m > 0) nb.push_back(m - 1);
        if (m + 1 < M) nb.push_back(m + 1);
        lay.neighbors.push_back(std::move(nb));
    }

    const int nv = grid.Nv(), half = nv / 2;
    lay.sources.resize(lay.size());
    for (int m = 0; m < M; ++m) {
        const auto& p = lay.patches[static_cast<std::size_t>(m)];
        auto& src = lay.sources[static_cast<std::size_t>(m)];
        src.resize(lay.trace_size());
        const auto from_neighbor = [&](int l, int node) {
            const auto& q = lay.patches[static_cast<std::size_t>(l)];
            if (!q.contains(node))
                throw StructuralError("patch end node not covered by its neighbor");
            return static_cast<std::size_t>(node - q.i0);
        };
        // left end: incoming v > 0 and theta1
        if (p.i0 == 0) {
            for (int q = 0; q < half; ++q) src[static_cast<std::size_t>(q)] = {TraceSource::physical, static_cast<std::size_t>(q)};
            src[static_cast<std::size_t>(nv)] = {TraceSource::physical, static_cast<std::size_t>(nv)};
        } else {
            const int l = m - 1;
            const std::size_t a = from_neighbor(l, p.i0);
            const std::size_t nodes = lay.patches[static_cast<std::size_t>(l)].node_count();
            for (int q = 0; q < half; ++q)
                src[static_cast<std::size_t>(q)] = {l, rte_I_index(a, half + q, nv)};
            src[static_cast<std::size_t>(nv)] = {l, rte_T_index(a, nodes, nv)};
        }
        // right end: incoming v < 0 and theta2
        if (p.i1 == n) {
            for (int q = 0; q < half; ++q)
                src[static_cast<std::size_t>(half + q)] = {TraceSource::physical, static_cast<std::size_t>(half + q)};
            src[static_cast<std::size_t>(nv + 1)] = {TraceSource::physical, static_cast<std::size_t>(nv + 1)};
        } else {
            const int l = m + 1;
            const std::size_t a = from_neighbor(l, p.i1);
            const std::size_t nodes = lay.patches[static_cast<std::size_t>(l)].node_count();
            for (int q = 0; q < half; ++q)
                src[static_cast<std::size_t>(half + q)] = {l, rte_I_index(a, q, nv)};
            src[static_cast<std::size_t>(nv + 1)] = {l, rte_T_index(a, nodes, nv)};
        }
    }
    detail::collect_segments(lay.sources, lay.segments);
    return lay;
}

// ---------------------------------------------------------------------------
// Partition of unity
// ---------------------------------------------------------------------------

/// chi_m sampled on the nodes of each patch (patch-local node order).
struct PartitionOfUnity {
    std::vector<std::vector<double>> weights;
};

inline PartitionOfUnity build_partition_of_unity(const PatchLayout2D& lay)
{
    const int n = lay.grid.n, o = lay.overlap_cells;
    const auto factor = [&](int i, int lo_core, int hi_core) {
        double f = 1.0;
        if (lo_core > 0) f *= detail::ramp_up(i, lo_core, o);
        if (hi_core < n) f *= detail::ramp_down(i, hi_core, o);
        return f;
    };
    PartitionOfUnity pou;
    std::vector<double> total(static_cast<std::size_t>(n + 1) * static_cast<std::size_t>(n + 1), 0.0);
    const IndexRect dom = lay.domain();
    for (std::size_t m = 0; m < lay.size(); ++m) {
        const auto [m1, m2] = lay.multi_index(static_cast<int>(m));
        const auto& r = lay.patches[m];
        std::vector<double> w(r.node_count());
        for (int j = r.j0; j <= r.j1; ++j)
            for (int i = r.i0; i <= r.i1; ++i) {
                const double v = factor(i, lay.core_x[m1 - 1], lay.core_x[m1])
                                 * factor(j, lay.core_y[m2 - 1], lay.core_y[m2]);
                w[r.local(i, j)] = v;
                total[dom.local(i, j)] += v;
            }
        pou.weights.push_back(std::move(w));
    }
    for (std::size_t m = 0; m < lay.size(); ++m) {
        const auto& r = lay.patches[m];
        for (int j = r.j0; j <= r.j1; ++j)
            for (int i = r.i0; i <= r.i1; ++i) {
                const double t = total[dom.local(i, j)];
                auto& w = pou.weights[m][r.local(i, j)];
                w = t > 0.0 ? w / t : 0.0;
            }
    }
    return pou;
}

inline PartitionOfUnity build_partition_of_unity(const PatchLayout1D& lay)
{
    const int n = lay.grid.Nx, o = lay.overlap_cells;
    PartitionOfUnity pou;
    std::vector<double> total(static_cast<std::size_t>(n + 1), 0.0);
    for (std::size_t m = 0; m < lay.size(); ++m) {
        const auto& p = lay.patches[m];
        std::vector<double> w(p.node_count());
        for (int i = p.i0; i <= p.i1; ++i) {
            double f = 1.0;
            if (lay.core[m] > 0) f *= detail::ramp_up(i, lay.core[m], o);
            if (lay.core[m + 1] < n) f *= detail::ramp_down(i, lay.core[m + 1], o);
            w[static_cast<std::size_t>(i - p.i0)] = f;
            total[static_cast<std::size_t>(i)] += f;
        }
        pou.weights.push_back(std::move(w));
    }
    for (std::size_t m = 0; m < lay.size(); ++m) {
        const auto& p = lay.patches[m];
        for (int i = p.i0; i <= p.i1; ++i) {
            const double t = total[static_cast<std::size_t>(i)];
            auto& w = pou.weights[m][static_cast<std::size_t>(i - p.i0)];
            w = t > 0.0 ? w / t : 0.0;
        }
    }
    return pou;
}

// ---------------------------------------------------------------------------
// Trace restriction
// ---------------------------------------------------------------------------

/// Values of patch l's field on dOmega_m ∩ Omega_l, in m's trace order.
template <class Layout>
std::vector<double> restrict_trace(std::span<const double> field_l, const Layout& lay, int l, int m)
{
    const auto it = lay.segments.find({m, l});
    if (it == lay.segments.end())
        throw StructuralError("no trace index map for patch pair (" + std::to_string(m) + ", " + std::to_string(l) + ")");
    std::vector<double> out;
    out.reserve(it->second.field_index.size());
    for (std::size_t idx : it->second.field_index) {
        if (idx >= field_l.size())
            throw StructuralError("trace index outside neighbor field");
        out.push_back(field_l[idx]);
    }
    return out;
}

} // namespace tsdd
