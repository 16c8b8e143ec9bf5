#pragma once

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tsdd/dictionary.hpp"
#include "tsdd/elliptic.hpp"
#include "tsdd/error.hpp"
#include "tsdd/problem.hpp"
#include "tsdd/rte.hpp"
#include "tsdd/schwarz.hpp"

/// Configuration-driven experiments producing CSV tables and JSON reports.
namespace tsdd::bench {

enum class ProblemKind { elliptic, rte };

struct ExperimentConfig {
    ProblemKind problem = ProblemKind::elliptic;
    double L = 1.0;
    double h = 0.0;   ///< elliptic mesh width
    double dx = 0.0;  ///< slab mesh width
    int Nv = 0;
    std::vector<double> eps;
    int M1 = 1, M2 = 1, M = 1;
    double overlap = 0.0;
    std::vector<double> buffers;
    double R = 20.0;
    int D = 5;
    int N = 64;
    std::uint64_t seed = 0;
    std::vector<int> k;
    double tol = 1e-5;
    int max_iter = 500;
    double ls_truncation = 1e-10;
    elliptic::NewtonOptions newton;
    rte::FixedPointOpts fixed_point;
    int refine = 1;
    elliptic::NewtonOptions reference_newton;
    rte::FixedPointOpts reference_fixed_point;
    std::array<int, 2> patch{1, 1};  ///< 1-based (m1, m2) or (m, 1)
    bool parallel_timing = false;
    std::string output = "out";
};

// ---------------------------------------------------------------------------
// JSON parsing with unknown-key rejection
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!obj.is_object())
        throw ConfigError(where + " must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items())
        if (!ok.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get(const nlohmann::json& obj, const char* key, const std::string& where)
{
    if (!obj.contains(key))
        throw ConfigError("missing key '" + std::string(key) + "' in " + where);
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

template <class T>
T get_or(const nlohmann::json& obj, const char* key, T fallback, const std::string& where)
{
    return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

/// Accept a scalar or an array for list-valued keys.
template <class T>
std::vector<T> get_list(const nlohmann::json& obj, const char* key, const std::string& where)
{
    if (!obj.contains(key))
        throw ConfigError("missing key '" + std::string(key) + "' in " + where);
    const auto& v = obj.at(key);
    try {
        if (v.is_array())
            return v.get<std::vector<T>>();
        return {v.get<T>()};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

} // namespace detail

/// Check every quantity that could fail later: grid alignment, layouts, k <= N, reference refinement.
inline void validate(const ExperimentConfig& c)
{
    if (c.eps.empty() || c.buffers.empty() || c.k.empty())
        throw ConfigError("eps, buffer and k lists must be nonempty");
    for (double e : c.eps)
        if (!(e > 0.0))
            throw ConfigError("eps values must be positive");
    for (int k : c.k)
        if (k < 2 || k > c.N)
            throw ConfigError("k = " + std::to_string(k) + " must lie in [2, N] with N = " + std::to_string(c.N));
    if (c.N < 1)
        throw ConfigError("sampler.N must be >= 1");
    sampling::validate({c.R, c.D, c.seed, sampling::SamplerKind::elliptic_interior});
    if (!(c.tol > 0.0) || c.max_iter < 1 || !(c.ls_truncation >= 0.0))
        throw ConfigError("online tol, max_iter and ls_truncation must be positive");
    if (c.refine < 1)
        throw ConfigError("reference.refine must be a positive integer");
    if (c.problem == ProblemKind::elliptic) {
        const Grid2D grid(c.L, c.h);
        (void)Grid2D(c.L, c.h / c.refine);
        for (double b : c.buffers) (void)build_layout_2d(grid, c.M1, c.M2, c.overlap, b);
        if (c.patch[0] < 1 || c.patch[0] > c.M1 || c.patch[1] < 1 || c.patch[1] > c.M2)
            throw ConfigError("bench.patch is outside the layout");
    } else {
        const Grid1D grid(c.L, c.dx, c.Nv);
        (void)aligned_cells(c.L, c.dx / c.refine, "reference slab length");
        for (double b : c.buffers) (void)build_layout_1d(grid, c.M, c.overlap, b);
        if (c.patch[0] < 1 || c.patch[0] > c.M)
            throw ConfigError("bench.patch is outside the layout");
    }
}

namespace detail {

inline ExperimentConfig parse_config_impl(const nlohmann::json& j)
{
    using detail::check_keys;
    using detail::get;
    using detail::get_or;
    ExperimentConfig c;
    check_keys(j, "config", {"problem", "grid", "eps", "layout", "sampler", "solver", "online", "reference", "bench", "output"});
    const auto kind = get<std::string>(j, "problem", "config");
    if (kind == "elliptic")
        c.problem = ProblemKind::elliptic;
    else if (kind == "rte")
        c.problem = ProblemKind::rte;
    else
        throw ConfigError("problem must be \"elliptic\" or \"rte\"");
    const bool ell = c.problem == ProblemKind::elliptic;

    const auto& g = j.at("grid");
    if (ell) {
        check_keys(g, "grid", {"L", "h"});
        c.L = get_or<double>(g, "L", 1.0, "grid");
        c.h = get<double>(g, "h", "grid");
    } else {
        check_keys(g, "grid", {"L", "dx", "Nv"});
        c.L = get_or<double>(g, "L", 3.0, "grid");
        c.dx = get<double>(g, "dx", "grid");
        c.Nv = get<int>(g, "Nv", "grid");
    }
    c.eps = detail::get_list<double>(j, "eps", "config");

    const auto& lay = j.at("layout");
    if (ell) {
        check_keys(lay, "layout", {"M1", "M2", "overlap", "buffer"});
        c.M1 = get<int>(lay, "M1", "layout");
        c.M2 = get<int>(lay, "M2", "layout");
    } else {
        check_keys(lay, "layout", {"M", "overlap", "buffer"});
        c.M = get<int>(lay, "M", "layout");
    }
    c.overlap = get<double>(lay, "overlap", "layout");
    c.buffers = detail::get_list<double>(lay, "buffer", "layout");

    const auto& s = j.at("sampler");
    check_keys(s, "sampler", {"R", "D", "N", "seed"});
    c.R = get<double>(s, "R", "sampler");
    c.D = get_or<int>(s, "D", ell ? 5 : 2, "sampler");
    c.N = get<int>(s, "N", "sampler");
    c.seed = get<std::uint64_t>(s, "seed", "sampler");

    const auto parse_solver = [&](const nlohmann::json& o, const std::string& where, elliptic::NewtonOptions& n,
                                  rte::FixedPointOpts& f) {
        if (ell) {
            check_keys(o, where, {"newton_tol", "newton_max_iter", "refine"});
            n.tol = get_or<double>(o, "newton_tol", n.tol, where);
            n.max_iter = get_or<int>(o, "newton_max_iter", n.max_iter, where);
        } else {
            check_keys(o, where, {"tol", "max_iter", "anderson_depth", "anderson_damping", "refine"});
            f.tol = get_or<double>(o, "tol", f.tol, where);
            f.max_iter = get_or<int>(o, "max_iter", f.max_iter, where);
            f.anderson_depth = get_or<int>(o, "anderson_depth", f.anderson_depth, where);
            f.anderson_damping = get_or<double>(o, "anderson_damping", f.anderson_damping, where);
            if (!(f.tol > 0.0) || f.max_iter < 1 || f.anderson_depth < 0)
                throw ConfigError(where + ": invalid fixed-point settings");
        }
    };
    if (j.contains("solver")) {
        if (j.at("solver").contains("refine"))
            throw ConfigError("unknown key 'refine' in solver");
        parse_solver(j.at("solver"), "solver", c.newton, c.fixed_point);
    }
    c.reference_newton = c.newton;
    c.reference_fixed_point = c.fixed_point;
    if (j.contains("reference")) {
        parse_solver(j.at("reference"), "reference", c.reference_newton, c.reference_fixed_point);
        c.refine = get_or<int>(j.at("reference"), "refine", 1, "reference");
    }

    const auto& on = j.at("online");
    check_keys(on, "online", {"k", "tol", "max_iter", "ls_truncation"});
    c.k = detail::get_list<int>(on, "k", "online");
    c.tol = get_or<double>(on, "tol", ell ? 1e-5 : 1e-3, "online");
    c.max_iter = get_or<int>(on, "max_iter", 500, "online");
    c.ls_truncation = get_or<double>(on, "ls_truncation", 1e-10, "online");

    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        check_keys(b, "bench", {"patch", "parallel_timing"});
        if (b.contains("patch")) {
            const auto p = detail::get_list<int>(b, "patch", "bench");
            if (p.empty() || p.size() > 2 || (!ell && p.size() != 1) || (ell && p.size() != 2))
                throw ConfigError(ell ? "bench.patch must be [m1, m2]" : "bench.patch must be a patch number");
            c.patch = {p[0], p.size() > 1 ? p[1] : 1};
        }
        c.parallel_timing = get_or<bool>(b, "parallel_timing", false, "bench");
    }
    c.output = get_or<std::string>(j, "output", "out", "config");
    validate(c);
    return c;
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j)
{
    try {
        return detail::parse_config_impl(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Formatting and file names
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal representation.
inline std::string num(double v)
{
    std::array<char, 64> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

inline std::string dictionary_file(double eps, double buffer) { return "dict_eps" + num(eps) + "_buf" + num(buffer) + ".tsd"; }
inline std::string reference_file(double eps) { return "ref_eps" + num(eps) + ".tsd"; }
inline std::string online_stem(double eps, double buffer, int k)
{
    return "online_eps" + num(eps) + "_buf" + num(buffer) + "_k" + std::to_string(k);
}
inline std::string classical_stem(double eps) { return "classical_eps" + num(eps); }
inline std::string offline_timing_file(double eps, double buffer)
{
    return "offline_eps" + num(eps) + "_buf" + num(buffer) + ".json";
}

// ---------------------------------------------------------------------------
// Experiment: problem construction, offline, reference, online, classical
// ---------------------------------------------------------------------------

using AnyProblem = std::variant<EllipticProblem, RteProblem>;

class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg, int threads = 1) : cfg_(std::move(cfg)), threads_(std::max(1, threads))
    {
        validate(cfg_);
    }

    const ExperimentConfig& config() const { return cfg_; }
    bool is_elliptic() const { return cfg_.problem == ProblemKind::elliptic; }

    AnyProblem problem(double eps, double buffer) const
    {
        if (is_elliptic()) {
            const Grid2D grid(cfg_.L, cfg_.h);
            return EllipticProblem(build_layout_2d(grid, cfg_.M1, cfg_.M2, cfg_.overlap, buffer), eps,
                                   elliptic::oscillating_boundary_data(grid), cfg_.newton);
        }
        const Grid1D grid(cfg_.L, cfg_.dx, cfg_.Nv);
        return RteProblem(build_layout_1d(grid, cfg_.M, cfg_.overlap, buffer), eps, rte::slab_boundary_data(grid.quad),
                          cfg_.fixed_point);
    }

    static const PatchSystem& system(const AnyProblem& p)
    {
        return std::visit([](const auto& x) -> const PatchSystem& { return x.system; }, p);
    }
    static const Vector& boundary(const AnyProblem& p)
    {
        return std::visit([](const auto& x) -> const Vector& { return x.boundary; }, p);
    }

    /// Linear patch index of the configured bench patch.
    int bench_patch() const { return is_elliptic() ? (cfg_.patch[0] - 1) + cfg_.M1 * (cfg_.patch[1] - 1) : cfg_.patch[0] - 1; }

    BuildOptions build_options() const
    {
        BuildOptions b;
        b.N = cfg_.N;
        b.sampler = {cfg_.R, cfg_.D, cfg_.seed,
                     is_elliptic() ? sampling::SamplerKind::elliptic_interior : sampling::SamplerKind::rte_interior};
        b.threads = threads_;
        return b;
    }

    DictionarySet offline(double eps, double buffer) const
    {
        const auto p = problem(eps, buffer);
        const auto opt = build_options();
        return std::visit([&](const auto& x) { return build_all(x, opt); }, p);
    }

    /// Monolithic solve on the (possibly refined) reference grid.
    Vector reference(double eps) const
    {
        if (is_elliptic())
            return elliptic_reference(eps, cfg_.L, cfg_.h / cfg_.refine, cfg_.reference_newton);
        return rte_reference(eps, Grid1D(cfg_.L, cfg_.dx / cfg_.refine, cfg_.Nv), cfg_.reference_fixed_point);
    }

    nlohmann::json reference_meta(double eps) const
    {
        nlohmann::json m = {{"problem", is_elliptic() ? "elliptic" : "rte"}, {"eps", eps}, {"L", cfg_.L}, {"refine", cfg_.refine}};
        if (is_elliptic())
            m["h"] = cfg_.h / cfg_.refine;
        else {
            m["dx"] = cfg_.dx / cfg_.refine;
            m["Nv"] = cfg_.Nv;
        }
        return m;
    }

    /// Reference field subsampled onto the run grid.
    Vector on_run_grid(const Vector& ref) const
    {
        if (cfg_.refine == 1)
            return ref;
        if (is_elliptic()) {
            const int n = Grid2D(cfg_.L, cfg_.h).n;
            return elliptic::subsample(ref, n * cfg_.refine, n);
        }
        const int nx = aligned_cells(cfg_.L, cfg_.dx, "slab length"), nv = cfg_.Nv;
        const auto fine_nodes = static_cast<std::size_t>(nx * cfg_.refine + 1), nodes = static_cast<std::size_t>(nx + 1);
        if (static_cast<std::size_t>(ref.size()) != fine_nodes * static_cast<std::size_t>(nv + 1))
            throw ConfigError("reference field does not match the refined slab grid");
        Vector out(static_cast<Eigen::Index>(nodes * static_cast<std::size_t>(nv + 1)));
        for (std::size_t a = 0; a < nodes; ++a) {
            const std::size_t f = a * static_cast<std::size_t>(cfg_.refine);
            for (int j = 0; j < nv; ++j)
                out[static_cast<Eigen::Index>(rte_I_index(a, j, nv))] = ref[static_cast<Eigen::Index>(rte_I_index(f, j, nv))];
            out[static_cast<Eigen::Index>(rte_T_index(a, nodes, nv))] = ref[static_cast<Eigen::Index>(rte_T_index(f, fine_nodes, nv))];
        }
        return out;
    }

    /// ||ref - u|| / ||ref|| in the problem's global discrete L2 norm, ref already on the run grid.
    static double relative_error(const PatchSystem& sys, const Vector& ref, const Vector& u)
    {
        if (ref.size() != u.size())
            throw ConfigError("relative_error: size mismatch");
        const double den = weighted_norm(ref, sys.global_field_weights);
        return weighted_norm(ref - u, sys.global_field_weights) / den;
    }

    OnlineOpts online_opts(int k) const
    {
        OnlineOpts o;
        o.k = k;
        o.tol = cfg_.tol;
        o.max_iter = cfg_.max_iter;
        o.ls_truncation = cfg_.ls_truncation;
        o.threads = threads_;
        return o;
    }

    SchwarzResult online(const AnyProblem& p, const DictionarySet& dicts, int k, bool serial = false) const
    {
        check_dictionary(p, dicts);
        auto o = online_opts(k);
        if (serial)
            o.threads = 1;
        return run_online(system(p), dicts, boundary(p), o);
    }

    SchwarzResult classical(const AnyProblem& p, bool serial = false) const
    {
        auto o = online_opts(cfg_.k.front());
        if (serial)
            o.threads = 1;
        if (const auto* e = std::get_if<EllipticProblem>(&p)) {
            EllipticClassicalMap map(*e);
            return run_classical(e->system, map, e->boundary, o);
        }
        const auto& r = std::get<RteProblem>(p);
        RteClassicalMap map(r);
        return run_classical(r.system, map, r.boundary, o);
    }

    /// Reject dictionaries built for a different instance.
    static void check_dictionary(const AnyProblem& p, const DictionarySet& dicts)
    {
        auto expect = std::visit([](const auto& x) { return x.describe(); }, p);
        auto got = dicts.meta;
        got.erase("sampler");
        // solver tolerances may differ between offline and online runs
        for (const char* k : {"newton_tol", "fixed_point_tol", "anderson_depth"}) {
            expect.erase(k);
            got.erase(k);
        }
        if (expect != got)
            throw ConfigError("dictionary metadata does not match the configured problem: expected " + expect.dump()
                              + ", found " + got.dump());
    }

private:
    ExperimentConfig cfg_;
    int threads_;
};

// ---------------------------------------------------------------------------
// Analysis helpers
// ---------------------------------------------------------------------------

/// Restriction of a global field to patch m's nodes.
inline Vector confine_global(const PatchSystem& sys, int m, const Vector& global)
{
    const auto& p = sys.patches[static_cast<std::size_t>(m)];
    Vector out(static_cast<Eigen::Index>(p.field_size));
    for (std::size_t q = 0; q < p.field_size; ++q) out[static_cast<Eigen::Index>(q)] = global[static_cast<Eigen::Index>(p.global_index[q])];
    return out;
}

/// Dictionary entries ordered by weighted field distance to `target`; ties to the lower index.
inline std::vector<int> nearest_fields(const Vector& target, const Matrix& fields, const Vector& weights)
{
    return knn(target, fields, weights, static_cast<int>(fields.cols()));
}

/**
 * Relative weighted distance from `target` to the affine spaces
 * base + span{cols[0..j)}, j = 0..cols.size(), by Gram-Schmidt with
 * reorthogonalization. Columns numerically inside the current span are
 * skipped, so the sequence is non-increasing by construction.
 */
inline std::vector<double> nested_projection_errors(const Vector& target, const Vector& base, const std::vector<Vector>& cols,
                                                    const Vector& weights, double drop_tol = 1e-12)
{
    const auto ip = [&](const Vector& a, const Vector& b) { return (weights.array() * a.array() * b.array()).sum(); };
    const double scale = std::sqrt(ip(target, target));
    Vector r = target - base;
    std::vector<Vector> q;
    std::vector<double> out{std::sqrt(std::max(ip(r, r), 0.0)) / scale};
    for (const auto& c : cols) {
        Vector v = c;
        const double n0 = std::sqrt(ip(v, v));
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& e : q) v -= ip(e, v) * e;
        const double nv = std::sqrt(ip(v, v));
        if (nv > drop_tol * n0 && nv > 0.0) {
            v /= nv;
            r -= ip(v, r) * v;
            q.push_back(std::move(v));
        }
        out.push_back(std::min(out.back(), std::sqrt(std::max(ip(r, r), 0.0)) / scale));
    }
    return out;
}

/// Singular values of the dictionary fields centered on entry `center` (that column omitted), weighted metric.
inline Vector centered_singular_values(const Matrix& fields, int center, const Vector& weights)
{
    const Vector sw = weights.array().sqrt();
    Matrix A(fields.rows(), fields.cols() - 1);
    for (Eigen::Index i = 0, c = 0; i < fields.cols(); ++i) {
        if (i == center)
            continue;
        A.col(c++) = sw.asDiagonal() * (fields.col(i) - fields.col(center));
    }
    Eigen::BDCSVD<Matrix> svd(A);
    return svd.singularValues();
}

// ---------------------------------------------------------------------------
// Benchmarks
// ---------------------------------------------------------------------------

using DictionaryProvider = std::function<const DictionarySet&(double eps, double buffer)>;
using ReferenceProvider = std::function<const Vector&(double eps)>;

/// (eps, buffer, patch, index, sigma_index / sigma_1)
inline std::string bench_svd(const Experiment& ex, const DictionaryProvider& dicts, const ReferenceProvider& refs)
{
    const auto& c = ex.config();
    std::ostringstream csv;
    csv << "eps,buffer,patch,index,sigma_ratio\n";
    const int m = ex.bench_patch();
    for (double eps : c.eps)
        for (double b : c.buffers) {
            const auto p = ex.problem(eps, b);
            const auto& sys = Experiment::system(p);
            const auto& ds = dicts(eps, b);
            Experiment::check_dictionary(p, ds);
            const auto& d = ds.for_patch(m);
            const auto& w = sys.patches[static_cast<std::size_t>(m)].field_weights;
            const Vector target = confine_global(sys, m, ex.on_run_grid(refs(eps)));
            const int center = nearest_fields(target, d.fields, w).front();
            const Vector s = centered_singular_values(d.fields, center, w);
            for (Eigen::Index i = 0; i < s.size(); ++i)
                csv << num(eps) << ',' << num(b) << ',' << m + 1 << ',' << i + 1 << ',' << num(s[0] > 0 ? s[i] / s[0] : 0.0) << '\n';
        }
    return csv.str();
}

/// (eps, buffer, patch, k, relative projection error onto the affine span of the k nearest entries)
inline std::string bench_projection(const Experiment& ex, const DictionaryProvider& dicts, const ReferenceProvider& refs)
{
    const auto& c = ex.config();
    std::ostringstream csv;
    csv << "eps,buffer,patch,k,relative_error\n";
    const int m = ex.bench_patch();
    const int kmax = *std::max_element(c.k.begin(), c.k.end());
    for (double eps : c.eps)
        for (double b : c.buffers) {
            const auto p = ex.problem(eps, b);
            const auto& sys = Experiment::system(p);
            const auto& ds = dicts(eps, b);
            Experiment::check_dictionary(p, ds);
            const auto& d = ds.for_patch(m);
            const auto& w = sys.patches[static_cast<std::size_t>(m)].field_weights;
            const Vector target = confine_global(sys, m, ex.on_run_grid(refs(eps)));
            const auto order = nearest_fields(target, d.fields, w);
            std::vector<Vector> cols;
            for (int q = 1; q < kmax; ++q) cols.push_back(d.fields.col(order[static_cast<std::size_t>(q)]) - d.fields.col(order[0]));
            const auto err = nested_projection_errors(target, d.fields.col(order[0]), cols, w);
            for (int k = 2; k <= kmax; ++k)
                csv << num(eps) << ',' << num(b) << ',' << m + 1 << ',' << k << ',' << num(err[static_cast<std::size_t>(k - 1)]) << '\n';
        }
    return csv.str();
}

/// (eps, buffer, k, global relative error, iterations, converged, wall seconds)
inline std::string bench_error_vs_k(const Experiment& ex, const DictionaryProvider& dicts, const ReferenceProvider& refs)
{
    const auto& c = ex.config();
    std::ostringstream csv;
    csv << "eps,buffer,k,relative_error,iterations,converged,wall_seconds\n";
    for (double eps : c.eps)
        for (double b : c.buffers) {
            const auto p = ex.problem(eps, b);
            const auto& ds = dicts(eps, b);
            const Vector ref = ex.on_run_grid(refs(eps));
            for (int k : c.k) {
                const auto r = ex.online(p, ds, k);
                csv << num(eps) << ',' << num(b) << ',' << k << ','
                    << num(Experiment::relative_error(Experiment::system(p), ref, r.global)) << ',' << r.report.iterations
                    << ',' << (r.report.converged ? 1 : 0) << ',' << num(r.report.time_total) << '\n';
            }
        }
    return csv.str();
}

/// Offline build seconds recorded by the offline command, if present.
using OfflineTimeProvider = std::function<double(double eps, double buffer)>;

/// (eps, buffer, k, offline, online and classical seconds, iteration counts, speedup)
inline std::string bench_timing(const Experiment& ex, const DictionaryProvider& dicts, const OfflineTimeProvider& offline_time)
{
    const auto& c = ex.config();
    const bool serial = !c.parallel_timing;
    std::ostringstream csv;
    csv << "eps,buffer,k,online_iterations,classical_iterations,online_converged,classical_converged,"
           "offline_seconds,online_seconds,classical_seconds,speedup\n";
    for (double eps : c.eps) {
        const auto base = ex.problem(eps, c.buffers.front());
        const auto cl = ex.classical(base, serial);
        for (double b : c.buffers) {
            const auto p = ex.problem(eps, b);
            const auto& ds = dicts(eps, b);
            for (int k : c.k) {
                const auto r = ex.online(p, ds, k, serial);
                csv << num(eps) << ',' << num(b) << ',' << k << ',' << r.report.iterations << ',' << cl.report.iterations
                    << ',' << (r.report.converged ? 1 : 0) << ',' << (cl.report.converged ? 1 : 0) << ','
                    << num(offline_time(eps, b)) << ',' << num(r.report.time_total) << ',' << num(cl.report.time_total)
                    << ',' << num(cl.report.time_total / r.report.time_total) << '\n';
            }
        }
    }
    return csv.str();
}

/// Drop timing columns (names ending in "_seconds" and "speedup") from a CSV table.
inline std::string strip_timing_columns(const std::string& csv)
{
    std::istringstream in(csv);
    std::string line;
    std::vector<bool> keep;
    std::ostringstream out;
    bool header = true;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (header) {
            for (const auto& h : cells)
                keep.push_back(!(h == "speedup" || (h.size() >= 8 && h.compare(h.size() - 8, 8, "_seconds") == 0)));
            header = false;
        }
        bool first = true;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i < keep.size() && !keep[i])
                continue;
            out << (first ? "" : ",") << cells[i];
            first = false;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace tsdd::bench
