// Command-line driver: offline dictionaries, online/classical runs, references and benchmark tables.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsdd/bench.hpp"
#include "tsdd/dictionary.hpp"
#include "tsdd/error.hpp"

namespace fs = std::filesystem;
using namespace tsdd;
using namespace tsdd::bench;

namespace {

enum Exit { ok = 0, other_error = 1, config_error = 2, solver_failure = 3, not_converged = 4 };

struct CommonArgs {
    std::string config;
    std::string out;
    std::string inputs;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool strict = false;
};

struct Context {
    ExperimentConfig cfg;
    fs::path out;
    fs::path inputs;
    int threads;
    bool strict;
};

Context make_context(const CommonArgs& a)
{
    Context c{load_config(a.config), {}, {}, a.threads, a.strict};
    if (a.seed)
        c.cfg.seed = *a.seed;
    if (a.threads < 1)
        throw ConfigError("--threads must be >= 1");
    c.out = a.out.empty() ? fs::path(c.cfg.output) : fs::path(a.out);
    c.inputs = a.inputs.empty() ? c.out : fs::path(a.inputs);
    fs::create_directories(c.out);
    return c;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot write " + path.string());
    f << text;
}

/// Loads dictionaries and references from the input directory on first use.
class Inputs {
public:
    explicit Inputs(fs::path dir) : dir_(std::move(dir)) {}

    const DictionarySet& dictionary(double eps, double buffer)
    {
        const auto key = std::pair{eps, buffer};
        auto it = dicts_.find(key);
        if (it == dicts_.end()) {
            const auto path = dir_ / dictionary_file(eps, buffer);
            if (!fs::exists(path))
                throw ConfigError("dictionary file " + path.string() + " not found; run `offline` first");
            it = dicts_.emplace(key, load(path)).first;
        }
        return it->second;
    }

    const Vector& reference(double eps)
    {
        auto it = refs_.find(eps);
        if (it == refs_.end()) {
            const auto path = dir_ / reference_file(eps);
            if (!fs::exists(path))
                throw ConfigError("reference file " + path.string() + " not found; run `reference` first");
            const auto set = load(path);
            if (set.dictionaries.size() != 1 || set.dictionaries[0].fields.cols() != 1)
                throw FormatError("reference file does not hold a single global field");
            it = refs_.emplace(eps, set.dictionaries[0].fields.col(0)).first;
        }
        return it->second;
    }

    double offline_seconds(double eps, double buffer) const
    {
        std::ifstream f(dir_ / offline_timing_file(eps, buffer));
        if (!f)
            return std::numeric_limits<double>::quiet_NaN();
        return nlohmann::json::parse(f).value("total_seconds", std::numeric_limits<double>::quiet_NaN());
    }

private:
    fs::path dir_;
    std::map<std::pair<double, double>, DictionarySet> dicts_;
    std::map<double, Vector> refs_;
};

int cmd_offline(const Context& c)
{
    const Experiment ex(c.cfg, c.threads);
    for (double eps : c.cfg.eps)
        for (double b : c.cfg.buffers) {
            auto opt = ex.build_options();
            nlohmann::json timing = {{"eps", eps}, {"buffer", b}, {"patches", nlohmann::json::array()}};
            opt.on_patch_built = [&](int m, double s, int retries) {
                std::cout << "  patch " << m + 1 << ": " << s << " s, " << retries << " retries\n";
                timing["patches"].push_back({{"patch", m + 1}, {"seconds", s}, {"retries", retries}});
            };
            std::cout << "offline eps=" << num(eps) << " buffer=" << num(b) << '\n';
            const auto t0 = std::chrono::steady_clock::now();
            const auto p = ex.problem(eps, b);
            const auto set = std::visit([&](const auto& x) { return build_all(x, opt); }, p);
            const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            save(set, c.out / dictionary_file(eps, b));
            timing["total_seconds"] = total;
            write_text(c.out / offline_timing_file(eps, b), timing.dump(2) + "\n");
            std::cout << "  total " << total << " s -> " << (c.out / dictionary_file(eps, b)).string() << '\n';
        }
    return ok;
}

int cmd_reference(const Context& c)
{
    const Experiment ex(c.cfg, c.threads);
    for (double eps : c.cfg.eps) {
        const Vector u = ex.reference(eps);
        Vector boundary;
        if (ex.is_elliptic())
            boundary = elliptic::oscillating_boundary_data(Grid2D(c.cfg.L, c.cfg.h / c.cfg.refine));
        else
            boundary = rte::slab_boundary_data(VelocityQuadrature(c.cfg.Nv));
        save(global_field_set(ex.reference_meta(eps), boundary, u), c.out / reference_file(eps));
        std::cout << "reference eps=" << num(eps) << " -> " << (c.out / reference_file(eps)).string() << '\n';
    }
    return ok;
}

int finish_run(const Context& c, const AnyProblem& p, const SchwarzResult& r, const std::string& stem, nlohmann::json extra)
{
    auto meta = std::visit([](const auto& x) { return x.describe(); }, p);
    save(global_field_set(meta, Experiment::boundary(p), r.global), c.out / (stem + ".tsd"));
    auto report = r.report.to_json();
    report.update(extra);
    write_text(c.out / (stem + ".json"), report.dump(2) + "\n");
    std::cout << stem << ": iterations=" << r.report.iterations << " converged=" << r.report.converged << '\n';
    return r.report.converged ? ok : (c.strict ? not_converged : ok);
}

int cmd_online(const Context& c)
{
    const Experiment ex(c.cfg, c.threads);
    Inputs in(c.inputs);
    int status = ok;
    for (double eps : c.cfg.eps)
        for (double b : c.cfg.buffers) {
            const auto p = ex.problem(eps, b);
            const auto& ds = in.dictionary(eps, b);
            for (int k : c.cfg.k) {
                const auto r = ex.online(p, ds, k);
                nlohmann::json extra = {{"eps", eps}, {"buffer", b}, {"k", k}};
                if (fs::exists(c.inputs / reference_file(eps)))
                    extra["relative_error"] =
                        Experiment::relative_error(Experiment::system(p), ex.on_run_grid(in.reference(eps)), r.global);
                status = std::max(status, finish_run(c, p, r, online_stem(eps, b, k), extra));
            }
        }
    return status;
}

int cmd_classical(const Context& c)
{
    const Experiment ex(c.cfg, c.threads);
    Inputs in(c.inputs);
    int status = ok;
    for (double eps : c.cfg.eps) {
        const auto p = ex.problem(eps, c.cfg.buffers.front());
        const auto r = ex.classical(p);
        nlohmann::json extra = {{"eps", eps}};
        if (fs::exists(c.inputs / reference_file(eps)))
            extra["relative_error"] =
                Experiment::relative_error(Experiment::system(p), ex.on_run_grid(in.reference(eps)), r.global);
        status = std::max(status, finish_run(c, p, r, classical_stem(eps), extra));
    }
    return status;
}

int cmd_bench(const Context& c, const std::string& which)
{
    const Experiment ex(c.cfg, c.threads);
    Inputs in(c.inputs);
    const DictionaryProvider dicts = [&](double e, double b) -> const DictionarySet& { return in.dictionary(e, b); };
    const ReferenceProvider refs = [&](double e) -> const Vector& { return in.reference(e); };
    std::string csv;
    if (which == "svd")
        csv = bench_svd(ex, dicts, refs);
    else if (which == "projection")
        csv = bench_projection(ex, dicts, refs);
    else if (which == "error_vs_k")
        csv = bench_error_vs_k(ex, dicts, refs);
    else
        csv = bench_timing(ex, dicts, [&](double e, double b) { return in.offline_seconds(e, b); });
    const auto path = c.out / ("bench_" + which + ".csv");
    write_text(path, csv);
    std::cout << "wrote " << path.string() << '\n';
    return ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Schwarz domain decomposition with learned local dictionaries"};
    app.require_subcommand(1);
    CommonArgs args;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", args.out, "output directory (default: config output)");
        sub->add_option("--inputs", args.inputs, "directory holding dictionaries and references (default: --out)");
        sub->add_option("--seed", args.seed, "override the sampler seed");
        sub->add_option("--threads", args.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--strict", args.strict, "exit with status 4 when a Schwarz run does not converge");
    };
    const std::map<std::string, std::string> commands = {
        {"offline", "build and save dictionaries for every (eps, buffer)"},
        {"online", "run the reduced Schwarz iteration for every (eps, buffer, k)"},
        {"classical", "run classical Schwarz with true local solves"},
        {"reference", "monolithic reference solves"},
        {"bench-svd", "singular values of centered dictionaries"},
        {"bench-projection", "projection error of the reference onto nearest dictionary entries"},
        {"bench-error-vs-k", "global online error over (eps, buffer, k)"},
        {"bench-timing", "reduced online vs classical wall time"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        subs[name] = app.add_subcommand(name, help);
        add_common(subs[name]);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : config_error;
    }

    try {
        const Context c = make_context(args);
        if (*subs["offline"]) return cmd_offline(c);
        if (*subs["online"]) return cmd_online(c);
        if (*subs["classical"]) return cmd_classical(c);
        if (*subs["reference"]) return cmd_reference(c);
        if (*subs["bench-svd"]) return cmd_bench(c, "svd");
        if (*subs["bench-projection"]) return cmd_bench(c, "projection");
        if (*subs["bench-error-vs-k"]) return cmd_bench(c, "error_vs_k");
        if (*subs["bench-timing"]) return cmd_bench(c, "timing");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const FormatError& e) {
        std::cerr << "input file error: " << e.what() << '\n';
        return config_error;
    } catch (const SolverFailure& e) {
        std::cerr << "solver failure: " << e.what() << " (last residual " << e.last_residual() << ")\n";
        return solver_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return other_error;
    }
    return ok;
}
