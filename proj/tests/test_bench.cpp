#include <cmath>
#include <map>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tsdd/bench.hpp"
#include "tsdd/error.hpp"

using namespace tsdd;
using namespace tsdd::bench;
using nlohmann::json;

namespace {

json elliptic_config()
{
    return json::parse(R"({
        "problem": "elliptic",
        "grid": {"L": 1.0, "h": 0.03125},
        "eps": [0.25],
        "layout": {"M1": 2, "M2": 2, "overlap": 0.03125, "buffer": [0.0625, 0.0]},
        "sampler": {"R": 20, "D": 5, "N": 8, "seed": 5},
        "online": {"k": [2, 4], "tol": 1e-5, "max_iter": 200},
        "bench": {"patch": [1, 2]},
        "output": "out/test"
    })");
}

json rte_config()
{
    return json::parse(R"({
        "problem": "rte",
        "grid": {"L": 3.0, "dx": 0.03125, "Nv": 8},
        "eps": [0.25],
        "layout": {"M": 3, "overlap": 0.25, "buffer": [0.25]},
        "sampler": {"R": 25, "N": 6, "seed": 5},
        "online": {"k": [2, 3]},
        "reference": {"anderson_depth": 10, "refine": 2}
    })");
}

/// Runs a whole benchmark table with in-process dictionaries and references.
struct Bench {
    Experiment ex;
    std::map<std::pair<double, double>, DictionarySet> dicts;
    std::map<double, Vector> refs;

    explicit Bench(const json& j) : ex(parse_config(j)) {}

    DictionaryProvider dict_provider()
    {
        return [this](double e, double b) -> const DictionarySet& {
            auto it = dicts.find({e, b});
            if (it == dicts.end())
                it = dicts.emplace(std::pair{e, b}, ex.offline(e, b)).first;
            return it->second;
        };
    }
    ReferenceProvider ref_provider()
    {
        return [this](double e) -> const Vector& {
            auto it = refs.find(e);
            if (it == refs.end())
                it = refs.emplace(e, ex.reference(e)).first;
            return it->second;
        };
    }
};

} // namespace

TEST(Config, ParsesBothProblems)
{
    const auto e = parse_config(elliptic_config());
    EXPECT_EQ(e.problem, ProblemKind::elliptic);
    EXPECT_EQ(e.buffers.size(), 2u);
    EXPECT_EQ(e.patch, (std::array<int, 2>{1, 2}));
    EXPECT_EQ(e.newton.tol, 1e-10);
    const auto r = parse_config(rte_config());
    EXPECT_EQ(r.problem, ProblemKind::rte);
    EXPECT_EQ(r.D, 2);
    EXPECT_EQ(r.tol, 1e-3);
    EXPECT_EQ(r.refine, 2);
    EXPECT_EQ(r.reference_fixed_point.anderson_depth, 10);
    EXPECT_EQ(r.fixed_point.anderson_depth, 5);
}

TEST(Config, RejectsBadInput)
{
    auto j = elliptic_config();
    j["extra"] = 1;
    EXPECT_THROW(parse_config(j), ConfigError);
    j = elliptic_config();
    j["sampler"]["radius"] = 3;
    EXPECT_THROW(parse_config(j), ConfigError);
    j = elliptic_config();
    j["online"]["k"] = json::array({2, 9});
    EXPECT_THROW(parse_config(j), ConfigError);
    j = elliptic_config();
    j["layout"]["overlap"] = 0.01;
    EXPECT_THROW(parse_config(j), ConfigError);
    j = elliptic_config();
    j["problem"] = "heat";
    EXPECT_THROW(parse_config(j), ConfigError);
    j = elliptic_config();
    j["bench"]["patch"] = json::array({3, 1});
    EXPECT_THROW(parse_config(j), ConfigError);
    j = elliptic_config();
    j["eps"] = json::array({-1.0});
    EXPECT_THROW(parse_config(j), ConfigError);
    j = elliptic_config();
    j.erase("grid");
    EXPECT_THROW(parse_config(j), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, DeskConfigsLoad)
{
    const auto e = load_config(std::string(TSDD_CONFIG_DIR) + "/elliptic_desk.json");
    EXPECT_EQ(e.M1 * e.M2, 16);
    EXPECT_EQ(e.N, 64);
    const auto r = load_config(std::string(TSDD_CONFIG_DIR) + "/rte_desk.json");
    EXPECT_EQ(r.M, 7);
    EXPECT_EQ(r.Nv, 32);
}

TEST(Format, NumbersAndFileNames)
{
    EXPECT_EQ(num(0.125), "0.125");
    EXPECT_EQ(num(0.0625), "0.0625");
    EXPECT_EQ(std::stod(num(0.1)), 0.1);
    EXPECT_EQ(dictionary_file(0.25, 0.0625), "dict_eps0.25_buf0.0625.tsd");
    EXPECT_EQ(online_stem(0.25, 0, 30), "online_eps0.25_buf0_k30");
}

TEST(Csv, StripTimingColumns)
{
    const std::string csv = "eps,k,online_seconds,iterations,speedup\n0.25,5,0.013,12,40.5\n0.5,5,0.02,9,31\n";
    EXPECT_EQ(strip_timing_columns(csv), "eps,k,iterations\n0.25,5,12\n0.5,5,9\n");
    EXPECT_EQ(strip_timing_columns("a,b\n1,2\n"), "a,b\n1,2\n");
}

TEST(Analysis, NestedProjectionMatchesLeastSquares)
{
    Matrix F = Matrix::Random(30, 8);
    const Vector w = Vector::LinSpaced(30, 0.5, 1.5);
    const Vector target = Vector::Random(30);
    std::vector<Vector> cols;
    for (int q = 1; q < 8; ++q) cols.push_back(F.col(q) - F.col(0));
    const auto err = nested_projection_errors(target, F.col(0), cols, w);
    ASSERT_EQ(err.size(), 8u);
    const Vector sw = w.array().sqrt();
    const double scale = (sw.cwiseProduct(target)).norm();
    EXPECT_NEAR(err[0], sw.cwiseProduct(target - F.col(0)).norm() / scale, 1e-14);
    for (std::size_t j = 1; j < err.size(); ++j) {
        EXPECT_LE(err[j], err[j - 1]);
        Matrix A(30, static_cast<Eigen::Index>(j));
        for (std::size_t q = 0; q < j; ++q) A.col(static_cast<Eigen::Index>(q)) = sw.cwiseProduct(cols[q]);
        const Vector b = sw.cwiseProduct(target - F.col(0));
        const Vector c = A.colPivHouseholderQr().solve(b);
        EXPECT_NEAR(err[j], (b - A * c).norm() / scale, 1e-12);
    }
}

TEST(Analysis, CenteredSingularValuesRankBound)
{
    // Fields living in a 3-dimensional affine space.
    const Matrix basis = Matrix::Random(20, 3);
    const Matrix coef = Matrix::Random(3, 10);
    Matrix F = basis * coef;
    F.colwise() += Vector::Constant(20, 0.7);
    const Vector s = centered_singular_values(F, 4, Vector::Ones(20));
    ASSERT_EQ(s.size(), 9);
    for (Eigen::Index i = 1; i < s.size(); ++i) EXPECT_LE(s[i], s[i - 1]);
    for (Eigen::Index i = 3; i < s.size(); ++i) EXPECT_LT(s[i], 1e-12 * s[0]);
}

TEST(Experiment, DictionaryMetadataGuard)
{
    Bench b(elliptic_config());
    const auto p = b.ex.problem(0.25, 0.0625);
    const auto other = b.ex.offline(0.25, 0.0);
    EXPECT_THROW(Experiment::check_dictionary(p, other), ConfigError);
    EXPECT_NO_THROW(Experiment::check_dictionary(p, b.dict_provider()(0.25, 0.0625)));
}

TEST(Experiment, TablesReproducibleAfterStripping)
{
    for (const auto& cfg : {elliptic_config(), rte_config()}) {
        std::string first;
        for (int run = 0; run < 2; ++run) {
            Bench b(cfg);
            const auto d = b.dict_provider();
            const auto r = b.ref_provider();
            const std::string all = strip_timing_columns(bench_svd(b.ex, d, r)) + strip_timing_columns(bench_projection(b.ex, d, r))
                                    + strip_timing_columns(bench_error_vs_k(b.ex, d, r))
                                    + strip_timing_columns(bench_timing(b.ex, d, [](double, double) { return 0.0; }));
            if (run == 0)
                first = all;
            else
                EXPECT_EQ(all, first);
        }
        EXPECT_NE(first.find("relative_error"), std::string::npos);
    }
}

TEST(Experiment, RefinedReferenceIsSubsampled)
{
    Bench b(rte_config());
    const Vector fine = b.ex.reference(0.25);
    const Vector coarse = b.ex.on_run_grid(fine);
    const auto p = b.ex.problem(0.25, 0.25);
    const std::size_t nodes = 97, fine_nodes = 193;
    const int nv = 8;
    ASSERT_EQ(static_cast<std::size_t>(coarse.size()), nodes * (nv + 1));
    EXPECT_EQ(static_cast<std::size_t>(coarse.size()), Experiment::system(p).global_field_size);
    for (std::size_t a = 0; a < nodes; ++a) {
        for (int j = 0; j < nv; ++j)
            ASSERT_EQ(coarse[static_cast<Eigen::Index>(rte_I_index(a, j, nv))], fine[static_cast<Eigen::Index>(rte_I_index(2 * a, j, nv))]);
        ASSERT_EQ(coarse[static_cast<Eigen::Index>(rte_T_index(a, nodes, nv))],
                  fine[static_cast<Eigen::Index>(rte_T_index(2 * a, fine_nodes, nv))]);
    }
    // Only the discretization error separates the run-grid solution from the refined reference.
    const auto cl = b.ex.classical(p);
    EXPECT_LT(Experiment::relative_error(Experiment::system(p), coarse, cl.global), 0.1);
}
