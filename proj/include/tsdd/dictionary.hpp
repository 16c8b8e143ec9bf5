#pragma once

#include <bit>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tsdd/elliptic.hpp"
#include "tsdd/error.hpp"
#include "tsdd/parallel.hpp"
#include "tsdd/problem.hpp"
#include "tsdd/random.hpp"
#include "tsdd/rte.hpp"
#include "tsdd/sampler.hpp"

namespace tsdd {

/// Paired samples for one patch: column i of `traces` is the boundary trace of column i of `fields`.
struct Dictionary {
    int patch = 0;  ///< patch whose buffered domain was sampled
    Matrix traces;
    Matrix fields;
    int retries = 0;

    Eigen::Index size() const { return traces.cols(); }
};

/// Dictionaries for a whole layout; `alias[m]` selects the dictionary serving patch m.
struct DictionarySet {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<Dictionary> dictionaries;
    std::vector<int> alias;

    std::size_t patch_count() const { return alias.size(); }
    const Dictionary& for_patch(int m) const
    {
        if (m < 0 || static_cast<std::size_t>(m) >= alias.size())
            throw StructuralError("dictionary requested for unknown patch");
        return dictionaries.at(static_cast<std::size_t>(alias[static_cast<std::size_t>(m)]));
    }
};

struct BuildOptions {
    int N = 64;
    sampling::SamplerConfig sampler;
    int max_retries = 3;
    int threads = 1;
    std::string created;  ///< optional timestamp recorded in metadata; empty keeps rebuilds byte-identical
    /// Called after each patch dictionary is built with (patch, seconds, retries).
    std::function<void(int, double, int)> on_patch_built;
};

namespace detail {

template <class SolveOne>
Dictionary fill_dictionary(int m, std::size_t trace_size, std::size_t field_size, const BuildOptions& opt,
                           int workers, SolveOne&& solve_one)
{
    if (opt.N < 1)
        throw ConfigError("dictionary size N must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    Dictionary d;
    d.patch = m;
    d.traces.resize(static_cast<Eigen::Index>(trace_size), opt.N);
    d.fields.resize(static_cast<Eigen::Index>(field_size), opt.N);
    std::vector<int> retries(static_cast<std::size_t>(opt.N), 0);
    parallel_for(static_cast<std::size_t>(opt.N), workers, [&](std::size_t i, std::size_t worker) {
        std::string last;
        for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
            RandomStream rng(opt.sampler.seed, static_cast<std::uint64_t>(m), i, static_cast<std::uint64_t>(attempt));
            try {
                auto [trace, field] = solve_one(rng, worker);
                d.traces.col(static_cast<Eigen::Index>(i)) = trace;
                d.fields.col(static_cast<Eigen::Index>(i)) = field;
                retries[i] = attempt;
                return;
            } catch (const SolverFailure& e) {
                last = e.what();
            }
        }
        throw SolverFailure("dictionary build for patch " + std::to_string(m) + ", sample " + std::to_string(i)
                                + " failed after " + std::to_string(opt.max_retries) + " retries: " + last,
                            0.0);
    });
    for (int r : retries) d.retries += r;
    if (opt.on_patch_built)
        opt.on_patch_built(m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), d.retries);
    return d;
}

inline nlohmann::json sampler_meta(const BuildOptions& opt)
{
    return {{"R", opt.sampler.R}, {"D", opt.sampler.D}, {"N", opt.N}, {"seed", opt.sampler.seed},
            {"max_retries", opt.max_retries}, {"created", opt.created}};
}

} // namespace detail

/**
 * Offline samples for elliptic patch m: draw H^1/2 traces on the buffered
 * rectangle (physical sides pinned to the global data), solve there, and keep
 * the restriction to the patch and its perimeter.
 */
inline Dictionary build_dictionary(const EllipticProblem& p, int m, const BuildOptions& opt)
{
    const auto& lay = p.layout;
    const auto& rb = lay.buffered[static_cast<std::size_t>(m)];
    const auto& r = lay.patches[static_cast<std::size_t>(m)];
    const double h = p.h();
    const Matrix W = elliptic::h12_weight_matrix(elliptic::trace_nodes(rb, lay.grid), h);

    const auto per = perimeter_nodes(rb);
    std::vector<Eigen::Index> fixed, free;
    for (std::size_t k = 0; k < per.size(); ++k)
        (lay.is_physical(per[k][0], per[k][1]) ? fixed : free).push_back(static_cast<Eigen::Index>(k));
    Vector phi_d(static_cast<Eigen::Index>(fixed.size()));
    for (std::size_t q = 0; q < fixed.size(); ++q) {
        const auto& node = per[static_cast<std::size_t>(fixed[q])];
        phi_d[static_cast<Eigen::Index>(q)] = p.boundary[static_cast<Eigen::Index>(global_perimeter_index(lay.grid.n, node[0], node[1]))];
    }

    std::function<Vector(RandomStream&)> draw;
    if (fixed.empty()) {
        auto s = std::make_shared<sampling::EllipticInteriorSampler>(opt.sampler, W);
        draw = [s](RandomStream& rng) { return s->sample(rng).phi; };
    } else {
        auto s = std::make_shared<sampling::EllipticBoundarySampler>(opt.sampler, sampling::partition(W, fixed, phi_d));
        draw = [s, fixed, free](RandomStream& rng) {
            const Vector cat = s->sample(rng).phi;
            Vector phi(static_cast<Eigen::Index>(fixed.size() + free.size()));
            const auto nd = static_cast<Eigen::Index>(fixed.size());
            for (std::size_t q = 0; q < fixed.size(); ++q) phi[fixed[q]] = cat[static_cast<Eigen::Index>(q)];
            for (std::size_t q = 0; q < free.size(); ++q) phi[free[q]] = cat[nd + static_cast<Eigen::Index>(q)];
            return phi;
        };
    }

    const int workers = std::max(1, std::min(opt.threads, opt.N));
    std::vector<std::unique_ptr<elliptic::LocalSolver>> solvers(static_cast<std::size_t>(workers));
    return detail::fill_dictionary(m, r.perimeter_count(), r.node_count(), opt, workers,
                                   [&](RandomStream& rng, std::size_t worker) {
                                       auto& s = solvers[worker];
                                       if (!s)
                                           s = std::make_unique<elliptic::LocalSolver>(p.media(), lay.grid, rb, p.newton);
                                       const Vector phi = draw(rng);
                                       const auto f = s->solve(phi);
                                       Vector field = elliptic::confine(f.values, rb, r);
                                       Vector trace = elliptic::extract_trace(field, r);
                                       return std::pair{std::move(trace), std::move(field)};
                                   });
}

/**
 * Offline samples for slab patch m: nonnegative traces on the buffered
 * interval (physical ends pinned), local transport solves, restriction to the patch.
 */
inline Dictionary build_dictionary(const RteProblem& p, int m, const BuildOptions& opt)
{
    const auto& lay = p.layout;
    const auto& pb = lay.buffered[static_cast<std::size_t>(m)];
    const auto& pm = lay.patches[static_cast<std::size_t>(m)];
    const int nv = lay.Nv(), half = nv / 2;
    const Vector w = rte_trace_weights(p.quad());
    std::vector<bool> fixed(static_cast<std::size_t>(nv + 2), false);
    Vector fixed_values = Vector::Zero(nv + 2);
    if (pb.i0 == 0) {
        for (int k = 0; k < half; ++k) fixed[static_cast<std::size_t>(k)] = true;
        fixed[static_cast<std::size_t>(nv)] = true;
    }
    if (pb.i1 == lay.grid.Nx) {
        for (int k = half; k < nv; ++k) fixed[static_cast<std::size_t>(k)] = true;
        fixed[static_cast<std::size_t>(nv + 1)] = true;
    }
    for (int k = 0; k < nv + 2; ++k)
        if (fixed[static_cast<std::size_t>(k)])
            fixed_values[k] = p.boundary[k];

    const int workers = std::max(1, std::min(opt.threads, opt.N));
    return detail::fill_dictionary(m, lay.trace_size(), lay.field_size(m), opt, workers,
                                   [&](RandomStream& rng, std::size_t) {
                                       const Vector phi = sampling::sample_rte(opt.sampler, w, fixed, fixed_values, rng).phi;
                                       const auto f = rte::solve_local_rte(pb.node_count(), p.dx(), p.quad(), phi, p.eps,
                                                                           p.fixed_point);
                                       const auto c = rte::confine(f, pb.i0, pm);
                                       return std::pair{rte::extract_trace(c), c.flatten()};
                                   });
}

/// One dictionary per elliptic patch.
inline DictionarySet build_all(const EllipticProblem& p, const BuildOptions& opt)
{
    DictionarySet set;
    set.meta = p.describe();
    set.meta["sampler"] = detail::sampler_meta(opt);
    for (std::size_t m = 0; m < p.layout.size(); ++m) {
        set.dictionaries.push_back(build_dictionary(p, static_cast<int>(m), opt));
        set.alias.push_back(static_cast<int>(m));
    }
    return set;
}

/**
 * Slab dictionaries: one per end patch and a single interior dictionary,
 * built on the middle patch and shared by every interior patch (the equation
 * has no explicit x dependence and interior patches have equal widths).
 */
inline DictionarySet build_all(const RteProblem& p, const BuildOptions& opt)
{
    const auto& lay = p.layout;
    const int M = lay.M;
    DictionarySet set;
    set.meta = p.describe();
    set.meta["sampler"] = detail::sampler_meta(opt);
    set.alias.assign(static_cast<std::size_t>(M), 0);
    set.dictionaries.push_back(build_dictionary(p, 0, opt));
    if (M == 1)
        return set;
    if (M > 2) {
        const int mid = (M - 1) / 2;
        const auto& pb = lay.buffered[static_cast<std::size_t>(mid)];
        if (pb.i0 == 0 || pb.i1 == lay.grid.Nx)
            throw ConfigError("buffer reaches the physical boundary from the shared interior patch");
        set.dictionaries.push_back(build_dictionary(p, mid, opt));
        for (int m = 1; m + 1 < M; ++m) set.alias[static_cast<std::size_t>(m)] = 1;
    }
    set.dictionaries.push_back(build_dictionary(p, M - 1, opt));
    set.alias[static_cast<std::size_t>(M - 1)] = static_cast<int>(set.dictionaries.size()) - 1;
    return set;
}

/// Append the entries of `b` to `a`; both must describe the same problem instance.
inline DictionarySet merge(DictionarySet a, const DictionarySet& b)
{
    const auto strip = [](nlohmann::json j) {
        j.erase("sampler");
        return j;
    };
    if (a.meta.value("eps", 0.0) != b.meta.value("eps", 0.0))
        throw ConfigError("cannot merge dictionaries built for different eps");
    if (strip(a.meta) != strip(b.meta) || a.alias != b.alias || a.dictionaries.size() != b.dictionaries.size())
        throw ConfigError("cannot merge dictionaries built for different layouts");
    for (std::size_t d = 0; d < a.dictionaries.size(); ++d) {
        auto& x = a.dictionaries[d];
        const auto& y = b.dictionaries[d];
        if (x.traces.rows() != y.traces.rows() || x.fields.rows() != y.fields.rows())
            throw ConfigError("cannot merge dictionaries with different entry shapes");
        Matrix t(x.traces.rows(), x.size() + y.size()), f(x.fields.rows(), x.size() + y.size());
        t << x.traces, y.traces;
        f << x.fields, y.fields;
        x.traces = std::move(t);
        x.fields = std::move(f);
        x.retries += y.retries;
    }
    a.meta["sampler"]["N"] = a.dictionaries.front().size();
    return a;
}

// ---------------------------------------------------------------------------
// File format: "TSDICT1", u64 header length, JSON header, float64 arrays, u64 FNV-1a.
// ---------------------------------------------------------------------------

inline constexpr std::string_view dictionary_magic = "TSDICT1";
inline constexpr int dictionary_format_version = 1;

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n)
{
    std::uint64_t hsh = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        hsh ^= data[i];
        hsh *= 0x100000001b3ULL;
    }
    return hsh;
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v)
{
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p)
{
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
    return v;
}

inline void put_doubles(std::string& out, const double* data, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
}

} // namespace detail

/// Serialize to bytes. Matrices are stored column-major, one entry per column.
inline std::string serialize(const DictionarySet& set)
{
    nlohmann::json header;
    header["format_version"] = dictionary_format_version;
    header["meta"] = set.meta;
    header["alias"] = set.alias;
    header["layout_order"] = "column-major float64 little-endian; traces then fields per dictionary";
    nlohmann::json dicts = nlohmann::json::array(), arrays = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (std::size_t d = 0; d < set.dictionaries.size(); ++d) {
        const auto& x = set.dictionaries[d];
        if (x.traces.cols() != x.fields.cols())
            throw StructuralError("dictionary trace and field counts differ");
        dicts.push_back({{"patch", x.patch}, {"retries", x.retries}, {"entries", x.size()},
                         {"trace_rows", x.traces.rows()}, {"field_rows", x.fields.rows()}});
        for (const auto* name : {"traces", "fields"}) {
            const Matrix& a = std::string_view(name) == "traces" ? x.traces : x.fields;
            const std::uint64_t bytes = static_cast<std::uint64_t>(a.size()) * 8;
            arrays.push_back({{"name", "d" + std::to_string(d) + "/" + name},
                              {"rows", a.rows()},
                              {"cols", a.cols()},
                              {"offset", offset},
                              {"bytes", bytes}});
            offset += bytes;
        }
    }
    header["dictionaries"] = dicts;
    header["arrays"] = arrays;
    const std::string text = header.dump();

    std::string out(dictionary_magic);
    detail::put_u64(out, text.size());
    out += text;
    out.reserve(out.size() + offset + 8);
    for (const auto& x : set.dictionaries) {
        detail::put_doubles(out, x.traces.data(), static_cast<std::size_t>(x.traces.size()));
        detail::put_doubles(out, x.fields.data(), static_cast<std::size_t>(x.fields.size()));
    }
    detail::put_u64(out, fnv1a64(reinterpret_cast<const unsigned char*>(out.data()), out.size()));
    return out;
}

inline DictionarySet deserialize(const std::string& bytes)
{
    const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t magic = dictionary_magic.size();
    if (bytes.size() < magic + 16)
        throw FormatError("dictionary file truncated");
    const std::size_t body = bytes.size() - 8;
    if (fnv1a64(u, body) != detail::get_u64(u + body))
        throw FormatError("dictionary checksum mismatch (file corrupt or truncated)");
    if (bytes.compare(0, magic, dictionary_magic) != 0)
        throw FormatError("not a dictionary file (bad magic)");
    const std::uint64_t hlen = detail::get_u64(u + magic);
    if (hlen > body - magic - 8)
        throw FormatError("dictionary header length out of range");
    const std::size_t data0 = magic + 8 + static_cast<std::size_t>(hlen);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(magic + 8),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(data0));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dictionary header is not valid JSON: ") + e.what());
    }
    try {
        if (header.at("format_version").get<int>() != dictionary_format_version)
            throw FormatError("unsupported dictionary format version");
        DictionarySet set;
        set.meta = header.at("meta");
        set.alias = header.at("alias").get<std::vector<int>>();
        const auto& dicts = header.at("dictionaries");
        const auto& arrays = header.at("arrays");
        if (arrays.size() != 2 * dicts.size())
            throw FormatError("array table does not match the dictionary table");
        const auto read = [&](const nlohmann::json& a, Eigen::Index rows, Eigen::Index cols) {
            if (a.at("rows").get<Eigen::Index>() != rows || a.at("cols").get<Eigen::Index>() != cols)
                throw FormatError("array shape inconsistent with its dictionary");
            const auto off = a.at("offset").get<std::uint64_t>();
            const auto nbytes = a.at("bytes").get<std::uint64_t>();
            if (nbytes != static_cast<std::uint64_t>(rows * cols) * 8 || data0 + off + nbytes > body)
                throw FormatError("array extent out of range");
            Matrix mtx(rows, cols);
            const unsigned char* p = u + data0 + off;
            for (Eigen::Index i = 0; i < mtx.size(); ++i) mtx.data()[i] = std::bit_cast<double>(detail::get_u64(p + 8 * i));
            return mtx;
        };
        for (std::size_t d = 0; d < dicts.size(); ++d) {
            Dictionary x;
            x.patch = dicts[d].at("patch").get<int>();
            x.retries = dicts[d].at("retries").get<int>();
            const auto n = dicts[d].at("entries").get<Eigen::Index>();
            const auto tr = dicts[d].at("trace_rows").get<Eigen::Index>();
            const auto fr = dicts[d].at("field_rows").get<Eigen::Index>();
            if (n < 0 || tr < 0 || fr < 0)
                throw FormatError("negative shape in dictionary table");
            x.traces = read(arrays[2 * d], tr, n);
            x.fields = read(arrays[2 * d + 1], fr, n);
            set.dictionaries.push_back(std::move(x));
        }
        for (int a : set.alias)
            if (a < 0 || static_cast<std::size_t>(a) >= set.dictionaries.size())
                throw FormatError("alias table refers to a missing dictionary");
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dictionary header is malformed: ") + e.what());
    }
}

inline void save(const DictionarySet& set, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    const std::string bytes = serialize(set);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("write to " + path.string() + " failed");
}

inline DictionarySet load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open dictionary file " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

/// A single "global" field stored in the dictionary format (online output, reference solutions).
inline DictionarySet global_field_set(nlohmann::json meta, const Vector& boundary, const Vector& field)
{
    DictionarySet set;
    set.meta = std::move(meta);
    set.meta["patch"] = "global";
    Dictionary d;
    d.patch = -1;
    d.traces = boundary;
    d.fields = field;
    set.dictionaries.push_back(std::move(d));
    set.alias = {0};
    return set;
}

} // namespace tsdd
