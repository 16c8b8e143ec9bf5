#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/QR>
#include <lapacke.h>
#include <json.hpp>

#include "tsdd/dictionary.hpp"
#include "tsdd/error.hpp"
#include "tsdd/parallel.hpp"
#include "tsdd/patch_system.hpp"

namespace tsdd {

struct OnlineOpts {
    int k = 30;
    double tol = 1e-5;
    int max_iter = 500;
    double ls_truncation = 1e-10;
    int threads = 1;
};

/// Indices of the k dictionary traces nearest to `query` in the weighted metric; ties go to the lower index.
inline std::vector<int> knn(const Vector& query, const Matrix& traces, const Vector& weights, int k)
{
    const auto n = traces.cols();
    if (k < 1 || k > n)
        throw ConfigError("knn: k must lie in [1, N]");
    if (traces.rows() != query.size() || weights.size() != query.size())
        throw ConfigError("knn: query shape does not match the dictionary");
    std::vector<double> d(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        d[static_cast<std::size_t>(i)] = (weights.array() * (traces.col(i) - query).array().square()).sum();
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    const auto less = [&](int a, int b) {
        const double da = d[static_cast<std::size_t>(a)], db = d[static_cast<std::size_t>(b)];
        return da < db || (da == db && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), less);
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

struct TangentFit {
    Vector u;
    Vector c;
    double residual = 0.0;
    int rank = 0;
    bool rank_deficient_warning = false;
};

/// Truncated SVD of the weighted tangent matrix for one neighbor list, reusable across queries.
struct TangentFactor {
    Eigen::Index base = 0;
    std::vector<int> others;
    Matrix U;       ///< left singular vectors kept after truncation, weighted trace space
    Vector inv_s;   ///< reciprocal kept singular values
    Matrix V;
    int rank = 0;
};

/**
 * Factor Phi = [phi_q - phi_base] in the weighted trace metric: Householder QR
 * of sqrt(w) Phi, then a LAPACK SVD of the small triangular factor. Singular
 * values below ls_truncation * sigma_max are dropped.
 */
inline TangentFactor tangent_factor(const Matrix& traces, const Vector& weights, int base, std::vector<int> others,
                                    double ls_truncation)
{
    TangentFactor f;
    f.base = base;
    f.others = std::move(others);
    const auto rows = traces.rows();
    const auto cols = static_cast<Eigen::Index>(f.others.size());
    if (cols == 0)
        return f;
    const Vector sw = weights.array().sqrt();
    Matrix A(rows, cols);
    for (Eigen::Index q = 0; q < cols; ++q)
        A.col(q) = sw.cwiseProduct(traces.col(f.others[static_cast<std::size_t>(q)]) - traces.col(base));
    const auto inner = std::min(rows, cols);
    Eigen::HouseholderQR<Matrix> qr(A);
    Matrix R = qr.matrixQR().topRows(inner).triangularView<Eigen::Upper>();
    const auto n = static_cast<lapack_int>(cols), mi = static_cast<lapack_int>(inner);
    const auto kk = std::min(mi, n);
    Vector s(kk);
    Matrix Us(mi, kk), Vt(kk, n);
    const lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', mi, n, R.data(), mi, s.data(), Us.data(), mi, Vt.data(), kk);
    if (info != 0)
        throw SolverFailure("tangent_factor: SVD did not converge", static_cast<double>(info), {});
    const double cut = s.size() ? ls_truncation * s[0] : 0.0;
    while (f.rank < s.size() && s[f.rank] > cut && s[f.rank] > 0.0) ++f.rank;
    Matrix Ur = Matrix::Zero(rows, f.rank);
    Ur.topRows(inner) = Us.leftCols(f.rank);
    f.U = qr.householderQ() * Ur;
    f.inv_s = s.head(f.rank).cwiseInverse();
    f.V = Vt.topRows(f.rank).transpose();
    return f;
}

/// Least-squares coefficients of one query in the factored tangent basis.
inline Vector tangent_coefficients(const TangentFactor& f, const Vector& query, const Matrix& traces, const Vector& weights)
{
    if (f.rank == 0)
        return Vector::Zero(static_cast<Eigen::Index>(f.others.size()));
    const Vector rhs = weights.array().sqrt() * (query - traces.col(f.base)).array();
    return f.V * (f.inv_s.asDiagonal() * (f.U.transpose() * rhs));
}

/// u = psi_base + sum_q c_q (psi_q - psi_base).
inline Vector tangent_combine(const TangentFactor& f, const Vector& c, const Matrix& fields)
{
    Vector u = (1.0 - c.sum()) * fields.col(f.base);
    for (Eigen::Index q = 0; q < c.size(); ++q)
        if (c[q] != 0.0)
            u.noalias() += c[q] * fields.col(f.others[static_cast<std::size_t>(q)]);
    return u;
}

/**
 * Affine tangent-plane interpolation around the nearest neighbor:
 *   c = argmin || query - phi_1 - Phi c ||_w,  Phi = [phi_q - phi_1]_{q=2..k},
 *   u = psi_1 + Psi c,
 * with the truncated SVD of tangent_factor.
 */
inline TangentFit tangent_interpolate(const Vector& query, const Matrix& traces, const Matrix& fields,
                                      const Vector& weights, const std::vector<int>& nbrs, double ls_truncation)
{
    if (nbrs.empty())
        throw ConfigError("tangent_interpolate: need at least one neighbor");
    const auto f = tangent_factor(traces, weights, nbrs.front(), {nbrs.begin() + 1, nbrs.end()}, ls_truncation);
    TangentFit out;
    out.c = tangent_coefficients(f, query, traces, weights);
    out.u = tangent_combine(f, out.c, fields);
    Vector fit_res = query - traces.col(f.base);
    for (Eigen::Index q = 0; q < out.c.size(); ++q)
        fit_res -= out.c[q] * (traces.col(f.others[static_cast<std::size_t>(q)]) - traces.col(f.base));
    out.rank = f.rank;
    out.rank_deficient_warning = !f.others.empty() && f.rank == 0;
    out.residual = weighted_norm(fit_res, weights);
    return out;
}

/// Boundary traces and latest local fields of every patch, with the update-norm history.
struct SchwarzState {
    int iteration = 0;
    std::vector<Vector> traces;
    std::vector<Vector> fields;
    std::vector<double> history;
};

struct SchwarzReport {
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;
    double time_knn = 0.0;
    double time_lstsq = 0.0;
    double time_local = 0.0;
    double time_assembly = 0.0;
    double time_total = 0.0;
    int warnings = 0;

    nlohmann::json to_json() const
    {
        return {{"iterations", iterations},
                {"converged", converged},
                {"update_norms", history},
                {"warnings", warnings},
                {"timings",
                 {{"knn", time_knn},
                  {"least_squares", time_lstsq},
                  {"local_solves", time_local},
                  {"assembly", time_assembly},
                  {"total", time_total}}}};
    }
};

struct SchwarzResult {
    Vector global;
    SchwarzState state;
    SchwarzReport report;
};

/// Zero traces on interfaces, prescribed data on the physical boundary.
inline SchwarzState initial_state(const PatchSystem& sys, const Vector& boundary)
{
    SchwarzState s;
    for (const auto& p : sys.patches) {
        Vector t = Vector::Zero(static_cast<Eigen::Index>(p.sources.size()));
        for (std::size_t k = 0; k < p.sources.size(); ++k)
            if (p.sources[k].is_physical())
                t[static_cast<Eigen::Index>(k)] = boundary[static_cast<Eigen::Index>(p.sources[k].index)];
        s.traces.push_back(std::move(t));
    }
    s.fields.resize(sys.size());
    return s;
}

namespace detail {
using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }
} // namespace detail

/**
 * One Jacobi sweep: every patch evaluates its local map on phi^(n), then each
 * trace entry is refreshed from the neighbor field that owns it (or reset to
 * the physical data). Returns sum_m ||phi_m^(n+1) - phi_m^(n)||.
 */
template <class LocalMap>
double boundary_update(const PatchSystem& sys, const Vector& boundary, SchwarzState& state, LocalMap& map, int threads = 1)
{
    std::vector<Vector> next_fields(sys.size());
    parallel_for(sys.size(), threads, [&](std::size_t m, std::size_t) {
        const Vector* prev = state.fields[m].size() ? &state.fields[m] : nullptr;
        next_fields[m] = map(static_cast<int>(m), state.traces[m], prev);
        if (static_cast<std::size_t>(next_fields[m].size()) != sys.patches[m].field_size)
            throw StructuralError("local map returned a field of the wrong size");
    });
    double total = 0.0;
    std::vector<Vector> next_traces(sys.size());
    for (std::size_t m = 0; m < sys.size(); ++m) {
        const auto& p = sys.patches[m];
        Vector t(static_cast<Eigen::Index>(p.sources.size()));
        for (std::size_t k = 0; k < p.sources.size(); ++k) {
            const auto& s = p.sources[k];
            t[static_cast<Eigen::Index>(k)] = s.is_physical()
                                                  ? boundary[static_cast<Eigen::Index>(s.index)]
                                                  : next_fields[static_cast<std::size_t>(s.patch)][static_cast<Eigen::Index>(s.index)];
        }
        total += weighted_norm(t - state.traces[m], p.trace_weights);
        next_traces[m] = std::move(t);
    }
    state.fields = std::move(next_fields);
    state.traces = std::move(next_traces);
    state.history.push_back(total);
    ++state.iteration;
    return total;
}

/// u = sum_m chi_m u_m on the global node set.
inline Vector assemble(const PatchSystem& sys, const std::vector<Vector>& fields)
{
    Vector u = Vector::Zero(static_cast<Eigen::Index>(sys.global_field_size));
    for (std::size_t m = 0; m < sys.size(); ++m) {
        const auto& p = sys.patches[m];
        for (std::size_t q = 0; q < p.field_size; ++q)
            u[static_cast<Eigen::Index>(p.global_index[q])] += p.pou[static_cast<Eigen::Index>(q)] * fields[m][static_cast<Eigen::Index>(q)];
    }
    return u;
}

/**
 * Iterate boundary_update until the update norm drops below tol or max_iter
 * sweeps have run, then assemble the last computed local fields. Layouts
 * without interfaces evaluate the local maps once and report zero iterations.
 */
template <class LocalMap>
SchwarzResult run_schwarz(const PatchSystem& sys, const Vector& boundary, LocalMap& map, const OnlineOpts& opts)
{
    if (opts.max_iter < 1)
        throw ConfigError("max_iter must be >= 1");
    if (!(opts.tol > 0.0))
        throw ConfigError("tol must be positive");
    const auto t0 = detail::Clock::now();
    SchwarzResult res;
    res.state = initial_state(sys, boundary);
    if (!sys.has_interfaces()) {
        boundary_update(sys, boundary, res.state, map, opts.threads);
        res.state.iteration = 0;
        res.state.history.clear();
        res.report.converged = true;
    } else {
        while (true) {
            const double change = boundary_update(sys, boundary, res.state, map, opts.threads);
            if (change < opts.tol) {
                res.report.converged = true;
                break;
            }
            if (res.state.iteration >= opts.max_iter)
                break;
        }
    }
    const auto ta = detail::Clock::now();
    res.global = assemble(sys, res.state.fields);
    res.report.time_assembly = detail::seconds_since(ta);
    res.report.iterations = res.state.iteration;
    res.report.history = res.state.history;
    res.report.time_total = detail::seconds_since(t0);
    return res;
}

/**
 * Local map backed by dictionaries: kNN in the trace metric, then tangent
 * interpolation. During the iteration only the field rows that other patches
 * read as trace data are evaluated; full_field rebuilds the whole local field
 * from the last fit.
 */
class SurrogateMap {
public:
    SurrogateMap(const PatchSystem& sys, const DictionarySet& dicts, const OnlineOpts& opts)
        : sys_(&sys), dicts_(&dicts), opts_(opts), knn_time_(sys.size(), 0.0), ls_time_(sys.size(), 0.0),
          warnings_(sys.size(), 0), exports_(sys.size()), cache_(sys.size()), last_(sys.size())
    {
        if (dicts.patch_count() != sys.size())
            throw ConfigError("dictionary set does not match the layout patch count");
        for (std::size_t m = 0; m < sys.size(); ++m) {
            const auto& d = dicts.for_patch(static_cast<int>(m));
            if (static_cast<std::size_t>(d.traces.rows()) != sys.patches[m].sources.size()
                || static_cast<std::size_t>(d.fields.rows()) != sys.patches[m].field_size)
                throw ConfigError("dictionary entry shapes do not match patch " + std::to_string(m));
            if (opts.k < 2 || opts.k > d.size())
                throw ConfigError("k = " + std::to_string(opts.k) + " must lie in [2, N] with N = "
                                  + std::to_string(d.size()));
        }
        for (const auto& p : sys.patches)
            for (const auto& src : p.sources)
                if (!src.is_physical())
                    exports_[static_cast<std::size_t>(src.patch)].push_back(static_cast<Eigen::Index>(src.index));
        for (auto& e : exports_) {
            std::sort(e.begin(), e.end());
            e.erase(std::unique(e.begin(), e.end()), e.end());
        }
    }

    /// The factorization depends only on the base neighbor and the neighbor set, so it is cached on that key.
    Vector operator()(int m, const Vector& trace, const Vector*)
    {
        const auto mi = static_cast<std::size_t>(m);
        const auto& d = dicts_->for_patch(m);
        const auto& w = sys_->patches[mi].trace_weights;
        auto t0 = detail::Clock::now();
        auto key = knn(trace, d.traces, w, opts_.k);
        std::sort(key.begin() + 1, key.end());
        knn_time_[mi] += detail::seconds_since(t0);
        t0 = detail::Clock::now();
        auto& cache = cache_[mi];
        auto it = cache.find(key);
        if (it == cache.end()) {
            Entry e{tangent_factor(d.traces, w, key.front(), {key.begin() + 1, key.end()}, opts_.ls_truncation), {}};
            const auto& ex = exports_[mi];
            e.rows.resize(static_cast<Eigen::Index>(ex.size()), static_cast<Eigen::Index>(key.size()));
            for (std::size_t q = 0; q < key.size(); ++q)
                for (std::size_t r = 0; r < ex.size(); ++r)
                    e.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) = d.fields(ex[r], key[q]);
            it = cache.emplace(std::move(key), std::move(e)).first;
        }
        const auto& entry = it->second;
        if (entry.factor.rank == 0)
            ++warnings_[mi];
        Vector c = tangent_coefficients(entry.factor, trace, d.traces, w);
        const Vector vals = (1.0 - c.sum()) * entry.rows.col(0) + entry.rows.rightCols(c.size()) * c;
        Vector u = Vector::Zero(static_cast<Eigen::Index>(sys_->patches[mi].field_size));
        const auto& ex = exports_[mi];
        for (std::size_t r = 0; r < ex.size(); ++r) u[ex[r]] = vals[static_cast<Eigen::Index>(r)];
        last_[mi] = {&entry.factor, std::move(c)};
        ls_time_[mi] += detail::seconds_since(t0);
        return u;
    }

    /// Complete local field of patch m from its most recent fit.
    Vector full_field(int m) const
    {
        const auto& l = last_[static_cast<std::size_t>(m)];
        if (!l.factor)
            throw StructuralError("full_field: patch has not been evaluated");
        return tangent_combine(*l.factor, l.c, dicts_->for_patch(m).fields);
    }

    double knn_time() const { return std::accumulate(knn_time_.begin(), knn_time_.end(), 0.0); }
    double lstsq_time() const { return std::accumulate(ls_time_.begin(), ls_time_.end(), 0.0); }
    int warnings() const { return std::accumulate(warnings_.begin(), warnings_.end(), 0); }

private:
    struct Entry {
        TangentFactor factor;
        Matrix rows;  ///< exported rows of [psi_base, psi_others...]
    };
    struct LastFit {
        const TangentFactor* factor = nullptr;
        Vector c;
    };

    const PatchSystem* sys_;
    const DictionarySet* dicts_;
    OnlineOpts opts_;
    std::vector<double> knn_time_, ls_time_;
    std::vector<int> warnings_;
    std::vector<std::vector<Eigen::Index>> exports_;
    std::vector<std::map<std::vector<int>, Entry>> cache_;
    std::vector<LastFit> last_;
};

/// Online stage: Schwarz iteration with the dictionary surrogate in place of local solves.
inline SchwarzResult run_online(const PatchSystem& sys, const DictionarySet& dicts, const Vector& boundary,
                                const OnlineOpts& opts)
{
    const auto t0 = detail::Clock::now();
    SurrogateMap map(sys, dicts, opts);
    auto res = run_schwarz(sys, boundary, map, opts);
    const auto ta = detail::Clock::now();
    for (std::size_t m = 0; m < sys.size(); ++m) res.state.fields[m] = map.full_field(static_cast<int>(m));
    res.global = assemble(sys, res.state.fields);
    res.report.time_assembly += detail::seconds_since(ta);
    res.report.time_knn = map.knn_time();
    res.report.time_lstsq = map.lstsq_time();
    res.report.warnings = map.warnings();
    res.report.time_total = detail::seconds_since(t0);
    return res;
}

/// Baseline: the same loop with true local solves on the unbuffered patches.
template <class ClassicalMap>
SchwarzResult run_classical(const PatchSystem& sys, ClassicalMap& map, const Vector& boundary, const OnlineOpts& opts)
{
    const auto t0 = detail::Clock::now();
    auto res = run_schwarz(sys, boundary, map, opts);
    res.report.time_local = detail::seconds_since(t0) - res.report.time_assembly;
    return res;
}

} // namespace tsdd
