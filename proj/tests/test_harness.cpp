#include "secest/experiment.hpp"
#include "secest/harness.hpp"
#include "secest/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace secest;

namespace {

SensorModel example_model() {
    Eigen::MatrixXd H(4, 2);
    H << 1, 0, 0, 1, 1, 2, 2, 1;
    return SensorModel(H, Eigen::Vector4d(1, 2, 2, 1), 1);
}

SensorModel homogeneous5() { return SensorModel(Eigen::MatrixXd::Ones(5, 1), Eigen::VectorXd::Ones(5), 1); }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("secest_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

json comparison_config(const std::string& out, long long trials) {
    return json{{"kind", "comparison"},
                {"model", {{"H", {{1}, {1}, {1}, {1}, {1}}}, {"W", {1, 1, 1, 1, 1}}, {"q", 1}}},
                {"horizons", {1, 5}},
                {"deltas", {1.0}},
                {"estimators", {{{"method", "optimal"}, {"eps", 1e-3}}, {{"method", "trimmed"}}, {{"method", "lasso"}}}},
                {"attack", {{"kind", "pinned"}, {"grid", {{"start", 0}, {"stop", 3}, {"step", 0.5}}}}},
                {"trials", trials},
                {"batch", 500},
                {"seed", 99},
                {"output", out}};
}

}  // namespace

TEST(Workers, Resolution) {
    EXPECT_EQ(resolve_workers(3), 3);
    setenv(kWorkersEnv, "5", 1);
    EXPECT_EQ(resolve_workers(0), 5);
    EXPECT_EQ(resolve_workers(2), 2);
    setenv(kWorkersEnv, "zero", 1);
    EXPECT_THROW(resolve_workers(0), ValidationError);
    setenv(kWorkersEnv, "0", 1);
    EXPECT_THROW(resolve_workers(0), ValidationError);
    unsetenv(kWorkersEnv);
    EXPECT_GE(resolve_workers(0), 1);
}

TEST(Workers, ParallelCellsPropagatesErrors) {
    std::vector<int> hit(100, 0);
    parallel_cells(100, 4, [&](std::size_t c, int) { hit[c] += 1; });
    for (int h : hit) EXPECT_EQ(h, 1);
    EXPECT_THROW(parallel_cells(10, 3, [](std::size_t c, int) {
                     if (c == 7) throw ValidationError("boom");
                 }),
                 ValidationError);
}

TEST(WorstCase, OracleEstimatorNeverErrs) {
    const auto model = homogeneous5();
    WorstCaseSetup s;
    s.k = 3;
    s.grid = {0.0, 1.0, 5.0};
    s.trials = 2000;
    s.workers = 2;
    const auto res = worst_case_probability(model, [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); }, s);
    EXPECT_EQ(res.e_hat, 0.0);
    for (double e : res.per_grid) EXPECT_EQ(e, 0.0);
    EXPECT_EQ(res.worst_index, 0u);  // ties go to the first grid point
    EXPECT_EQ(res.std_err, 0.0);
}

TEST(WorstCase, LeastSquaresBreaksUnderLargeBias) {
    const auto model = homogeneous5();
    WorstCaseSetup s;
    s.attack = AttackKind::Bias;
    s.grid = {0.0, 2.0, 10.0, 50.0};
    s.trials = 4000;
    s.workers = 1;
    const auto res = worst_case_probability(model, Estimator(model, {Method::LeastSquares}), s);
    EXPECT_EQ(res.worst_index, 3u);
    EXPECT_EQ(res.e_hat, 1.0);
    EXPECT_LT(res.per_grid[0], 0.1);
    EXPECT_LE(res.per_grid[0], res.per_grid[1]);
}

TEST(WorstCase, FailuresCountAsErrors) {
    const auto model = homogeneous5();
    WorstCaseSetup s;
    s.grid = {0.0, 1.0};
    s.trials = 100;
    s.workers = 1;
    const auto res = worst_case_probability(
        model,
        [](const Eigen::VectorXd& y) -> Eigen::VectorXd {
            if (y(4) > 0.5) throw NumericalError("nope");
            return Eigen::VectorXd::Zero(1);
        },
        s);
    EXPECT_EQ(res.per_grid[0], 0.0);
    EXPECT_EQ(res.per_grid[1], 1.0);
    EXPECT_EQ(res.failures, 100);
    EXPECT_EQ(res.failures_per_grid[1], 100);
}

TEST(WorstCase, DeterministicAcrossWorkers) {
    const auto model = homogeneous5();
    WorstCaseSetup s;
    s.grid = {0.0, 0.5, 1.0, 2.0};
    s.trials = 3000;
    s.batch = 256;
    s.seed = 17;
    Estimator f(model, {Method::Optimal, 1.0, 1e-3}, 1);
    s.workers = 1;
    const auto a = worst_case_probability(model, f, s);
    for (int w : {2, 4, 8}) {
        s.workers = w;
        const auto b = worst_case_probability(model, f, s);
        EXPECT_EQ(a.per_grid, b.per_grid);
        EXPECT_EQ(a.e_hat, b.e_hat);
    }
}

TEST(WorstCase, StandardErrorScaling) {
    const auto model = homogeneous5();
    WorstCaseSetup s;
    s.grid = {3.0};
    s.workers = 1;
    s.seed = 5;
    Estimator f(model, {Method::TrimmedMean}, 1);
    s.trials = 20000;
    const auto a = worst_case_probability(model, f, s);
    s.trials = 40000;
    const auto b = worst_case_probability(model, f, s);
    EXPECT_NEAR(a.std_err, std::sqrt(a.e_hat * (1 - a.e_hat) / 20000), 1e-15);
    ASSERT_GT(a.e_hat, 0.0);
    EXPECT_NEAR(b.std_err / a.std_err, 1.0 / std::sqrt(2.0), 0.1);
    EXPECT_NEAR(a.e_hat, b.e_hat, 5.0 * a.std_err);
}

TEST(WorstCase, OptimalEstimatorImprovesWithHorizon) {
    const auto model = homogeneous5();
    WorstCaseSetup s;
    s.grid = {0.0, 1.0, 2.0, 3.0, 4.0};
    s.trials = 5000;
    s.seed = 8;
    s.workers = 1;
    double prev = 2.0;
    for (int k : {1, 5, 10}) {
        s.k = k;
        const auto r = worst_case_probability(model, Estimator(model, {Method::Optimal, 1.0, 1e-3}, k), s);
        EXPECT_LE(r.e_hat, prev + 3.0 * r.std_err);
        prev = r.e_hat;
    }
}

TEST(WorstCase, Validation) {
    const auto model = homogeneous5();
    const auto f = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); };
    WorstCaseSetup s;
    EXPECT_THROW(worst_case_probability(model, f, s), ValidationError);  // empty grid
    s.grid = {1.0};
    s.trials = 0;
    EXPECT_THROW(worst_case_probability(model, f, s), ValidationError);
    s.trials = 10;
    s.compromised = 5;
    EXPECT_THROW(worst_case_probability(model, f, s), ValidationError);
}

TEST(ResilienceSweep, ZeroBiasAndLeastSquaresGrowth) {
    const auto model = example_model();
    const Eigen::Vector4d z(1, 1, 3, 3);
    std::vector<double> grid;
    for (int a = 0; a <= 15; ++a) grid.push_back(a);
    const auto r = resilience_sweep(model, {{Method::Optimal, 1.0, 1e-3}, {Method::Optimal, 3.0, 1e-3}, {Method::LeastSquares}},
                                    z, 3, grid);
    ASSERT_EQ(r.labels.size(), 3u);
    EXPECT_EQ(r.labels[0], "optimal[delta=1]");
    EXPECT_EQ(r.labels[2], "ls");
    for (double e : r.rows[0].errors) EXPECT_LT(e, 1e-6);
    for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_GT(r.rows[i].errors[2], r.rows[i - 1].errors[2]);
    EXPECT_EQ(zero_error_onset(r, 0).value(), 3.0);
    EXPECT_EQ(zero_error_onset(r, 1).value(), 8.0);
    EXPECT_FALSE(zero_error_onset(r, 2).has_value());
}

TEST(ZeroErrorOnset, RequiresTailBelowThreshold) {
    SweepResult r;
    r.labels = {"f"};
    for (auto [a, e] : std::vector<std::pair<double, double>>{{0, 0}, {1, 0.5}, {2, 0}, {3, 1e-9}})
        r.rows.push_back({a, {e}});
    EXPECT_EQ(zero_error_onset(r, 0).value(), 2.0);
    r.rows.push_back({4, {0.1}});
    EXPECT_FALSE(zero_error_onset(r, 0).has_value());
}

TEST(Io, NumbersAndRanges) {
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(-2.5e-12), "-2.5e-12");
    EXPECT_EQ(format_double(3.0), "3");
    EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
    const auto v = parse_vector("4,-4, 5,-5");
    EXPECT_EQ(v, Eigen::Vector4d(4, -4, 5, -5));
    EXPECT_THROW(parse_vector("1,x"), ValidationError);
    EXPECT_THROW(parse_vector(""), ValidationError);
    const auto r = parse_range("3:4:0.25");
    ASSERT_EQ(r.size(), 5u);
    EXPECT_DOUBLE_EQ(r.back(), 4.0);
    EXPECT_EQ(range_values(3, 30, 0.01).size(), 2701u);
    EXPECT_THROW(parse_range("1:0:1"), ValidationError);
    EXPECT_THROW(parse_range("0:1:0"), ValidationError);
}

TEST(Io, ModelAndScenarioJson) {
    const auto model = model_from_json(json::parse(R"({"H":[[1,0],[0,1],[1,2],[2,1]],"W":[1,2,2,1],"q":1})"));
    EXPECT_EQ(model.m(), 4);
    EXPECT_EQ(model_to_json(model)["q"], 1);
    EXPECT_THROW(model_from_json(json::parse(R"({"H":[[1,0],[0]],"W":[1,2],"q":0})")), ValidationError);
    EXPECT_THROW(model_from_json(json::parse(R"({"H":[[1]],"W":[1]})")), ValidationError);
    try {
        model_from_json(json::parse(R"({"H":[[1],[1],[1]],"W":[1,"a",1],"q":1})"));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("model.W[1]"), std::string::npos);
    }

    const auto sc = scenario_from_json(json::parse(
        R"({"x_true":[0],"compromised":[4],"k":10,"seed":3,"bias_policy":{"kind":"pinned","values":[2.5]}})"));
    ASSERT_TRUE(std::holds_alternative<PinnedAverage>(sc.bias_policy));
    EXPECT_EQ(std::get<PinnedAverage>(sc.bias_policy).values(0), 2.5);
    const auto sc2 = scenario_from_json(
        json::parse(R"({"x_true":[0],"compromised":[0],"k":2,"bias_policy":{"kind":"sequence","bias":[[1,2],[0,0]]}})"));
    EXPECT_TRUE(std::holds_alternative<BiasSequence>(sc2.bias_policy));
    EXPECT_THROW(scenario_from_json(json::parse(R"({"x_true":[0],"bias_policy":{"kind":"ramp"}})")), ValidationError);
    EXPECT_THROW(scenario_from_json(json::parse(R"({"x_true":[0],"bias_policy":{"bias":[1]}})")), ValidationError);
}

TEST(Experiment, ConfigValidationNamesTheField) {
    auto expect_field = [](json j, const std::string& field) {
        try {
            experiment_config_from_json(j);
            FAIL() << "accepted config without " << field;
        } catch (const ValidationError& e) {
            EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
        }
    };
    auto c = comparison_config("out", 10);
    c["trials"] = 0;
    expect_field(c, "trials");
    c = comparison_config("out", 10);
    c["attack"]["grid"] = json::array();
    expect_field(c, "attack.grid");
    c = comparison_config("out", 10);
    c["kind"] = "bar-chart";
    expect_field(c, "kind");
    c = comparison_config("out", 10);
    c["estimators"][1]["method"] = "median";
    expect_field(c, "estimators[1].method");
    c = comparison_config("out", 10);
    c["horizons"] = {1, 0};
    expect_field(c, "horizons[1]");
}

TEST(Experiment, ComparisonIsByteIdenticalAcrossWorkers) {
    std::string first;
    for (int w : {1, 4, 8}) {
        const auto dir = scratch("cmp" + std::to_string(w));
        const auto cfg = experiment_config_from_json(comparison_config(dir.string(), 2000));
        const auto art = run_experiment(cfg, w);
        const auto csv = slurp((dir / "comparison.csv").string());
        EXPECT_EQ(art.metadata["workers"], w);
        EXPECT_NE(csv.find("delta,k,estimator,e_hat,std_err,worst_attack,trials,failures"), std::string::npos);
        if (first.empty()) {
            first = csv;
        } else {
            EXPECT_EQ(csv, first);
        }
        std::filesystem::remove_all(dir);
    }
}

TEST(Experiment, RegionFigureWritesPanels) {
    const auto dir = scratch("region");
    json j{{"kind", "region-figure"},
           {"model", {{"H", {{1, 0}, {0, 1}, {1, 2}, {2, 1}}}, {"W", {1, 2, 2, 1}}, {"q", 1}}},
           {"y", {4, -4, 5, -5}},
           {"phis", {4, 6, 14, 25}},
           {"boundary_points", 32},
           {"output", dir.string()}};
    const auto art = run_experiment(experiment_config_from_json(j));
    EXPECT_EQ(art.files.size(), 4u);
    const auto& panels = art.metadata["summary"]["panels"];
    ASSERT_EQ(panels.size(), 4u);
    EXPECT_EQ(panels[0]["pieces"], 1);
    EXPECT_EQ(panels[3]["pieces"], 4);
    EXPECT_NEAR(panels[1]["radius"].get<double>(), 4.28482, 1e-5);
    const auto boundary = slurp((dir / "region-figure-boundary.csv").string());
    EXPECT_EQ(boundary.rfind("phi,piece,vertex,x_1,x_2\n", 0), 0u);
    std::filesystem::remove_all(dir);
}

TEST(Experiment, RadiusCurveJumpsAtResidues) {
    const auto dir = scratch("curve");
    json j{{"kind", "radius-curve"},
           {"model", {{"H", {{1, 0}, {0, 1}, {1, 2}, {2, 1}}}, {"W", {1, 2, 2, 1}}, {"q", 1}}},
           {"y", {4, -4, 5, -5}},
           {"phi_grid", {{"start", 3}, {"stop", 30}, {"step", 0.05}}},
           {"output", dir.string()}};
    const auto art = run_experiment(experiment_config_from_json(j));
    const auto& jumps = art.metadata["summary"]["jumps"];
    ASSERT_EQ(jumps.size(), 2u);
    EXPECT_NEAR(jumps[0]["residue"].get<double>(), 5.78571, 1e-4);
    EXPECT_NEAR(jumps[1]["residue"].get<double>(), 13.5, 1e-4);
    EXPECT_NEAR(jumps[0]["at"].get<double>(), 5.78571, 1e-5);
    EXPECT_NEAR(jumps[1]["at"].get<double>(), 13.5, 1e-5);
    // the region born at 3.68182 grows like a square root: steep, but continuous
    const auto& steep = art.metadata["summary"]["steep_steps"];
    ASSERT_FALSE(steep.empty());
    EXPECT_LT(steep[0]["phi_before"].get<double>(), 3.8);
    std::filesystem::remove_all(dir);
}

TEST(Experiment, ResilienceSweepReportsOnsets) {
    const auto dir = scratch("sweep");
    json j{{"kind", "resilience-sweep"},
           {"model", {{"H", {{1, 0}, {0, 1}, {1, 2}, {2, 1}}}, {"W", {1, 2, 2, 1}}, {"q", 1}}},
           {"z", {1, 1, 3, 3}},
           {"compromised", 3},
           {"bias_grid", {{"start", 0}, {"stop", 15}, {"step", 1}}},
           {"estimators", {{{"method", "optimal"}, {"delta", 1}}, {{"method", "ls"}}}},
           {"output", dir.string()}};
    const auto art = run_experiment(experiment_config_from_json(j));
    EXPECT_EQ(art.metadata["summary"]["zero_error_onset"]["optimal[delta=1]"], 3.0);
    EXPECT_TRUE(art.metadata["summary"]["zero_error_onset"]["ls"].is_null());
    const auto csv = slurp((dir / "resilience-sweep.csv").string());
    EXPECT_EQ(csv.rfind("a,optimal[delta=1],ls\n", 0), 0u);
    std::filesystem::remove_all(dir);
}
