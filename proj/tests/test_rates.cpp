#include "secest/rates.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace secest;

namespace {

SensorModel example_model() {
    Eigen::MatrixXd H(4, 2);
    H << 1, 0, 0, 1, 1, 2, 2, 1;
    return SensorModel(H, Eigen::Vector4d(1, 2, 2, 1), 1);
}

SensorModel homogeneous(int m, int q, double w = 1.0) {
    return SensorModel(Eigen::MatrixXd::Ones(m, 1), Eigen::VectorXd::Constant(m, w), q);
}

SensorModel random_model(std::mt19937_64& rng, int m, int n, int q) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.2, 3.0);
    Eigen::MatrixXd H(m, n);
    for (auto& v : H.reshaped()) v = N(rng);
    Eigen::VectorXd W(m);
    for (auto& w : W) w = U(rng);
    return SensorModel(H, W, q);
}

/// min over supports S (|S| = 2q) and unit x on a dense circle of
/// 1/2 sum_{i not in S} (H_i x)^2 / W_i.
double unit_circle_oracle(const SensorModel& model, int samples = 200000) {
    double best = std::numeric_limits<double>::infinity();
    const auto supports = combinations(model.m(), 2 * model.q());
    for (int s = 0; s < samples; ++s) {
        const double t = M_PI * s / samples;
        const Eigen::Vector2d x(std::cos(t), std::sin(t));
        for (const auto& S : supports) {
            double v = 0.0;
            for (int i : complement(S, model.m())) {
                const double h = model.H().row(i).dot(x);
                v += 0.5 * h * h / model.W()(i);
            }
            best = std::min(best, v);
        }
    }
    return best;
}

}  // namespace

TEST(UpperBoundRate, HomogeneousClosedForm) {
    // 1/2 * (m - 2q) / W_i, i.e. (m - 2q)/W with W = 2 W_i
    EXPECT_NEAR(upper_bound_rate(homogeneous(5, 1)).u_bar_1, 1.5, 1e-12);
    EXPECT_NEAR(upper_bound_rate(homogeneous(5, 1, 0.5)).u_bar_1, 3.0, 1e-12);
    EXPECT_NEAR(upper_bound_rate(homogeneous(7, 2, 2.0)).u_bar_1, 0.75, 1e-12);
    const auto r = upper_bound_rate(homogeneous(5, 1));
    EXPECT_EQ(r.support, (Subset{0, 1}));
    EXPECT_NEAR(r.at(1.5), 1.5 * 2.25, 1e-12);
}

TEST(UpperBoundRate, ScalingLaw) {
    const auto r = upper_bound_rate(example_model());
    for (double d : {0.1, 1.0, 2.5, 10.0}) EXPECT_NEAR(r.at(d) / (d * d), r.u_bar_1, 1e-14);
}

TEST(UpperBoundRate, HeavyNoiseSensorVanishes) {
    Eigen::VectorXd W = Eigen::VectorXd::Ones(5);
    W(2) = 1e12;
    const SensorModel model(Eigen::MatrixXd::Ones(5, 1), W, 1);
    // the heavy sensor contributes nothing, so the best support removes two
    // of the other four and leaves two informative rows
    EXPECT_NEAR(upper_bound_rate(model).u_bar_1, 1.0, 1e-9);
}

TEST(UpperBoundRate, MatchesUnitCircleOracle) {
    std::mt19937_64 rng(derive_seed(61, 0));
    for (int t = 0; t < 20; ++t) {
        const auto model = random_model(rng, 4 + t % 3, 2, 1);
        const double got = upper_bound_rate(model).u_bar_1;
        EXPECT_NEAR(got, unit_circle_oracle(model, 20000), 1e-3 * std::max(1.0, got));
        EXPECT_GE(got, 0.0);
    }
}

TEST(UpperBoundRate, RankDeficientWarns) {
    Eigen::MatrixXd H(4, 2);
    H << 1, 0, 1, 0, 0, 1, 0, 1;
    const auto r = upper_bound_rate(SensorModel(H, Eigen::VectorXd::Ones(4), 1));
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.u_bar_1, 0.0);
    EXPECT_FALSE(r.warnings.empty());
}

TEST(UOfYDelta, ExampleSingleEllipsoidRegime) {
    const auto model = example_model();
    const Eigen::Vector4d y(4, -4, 5, -5);
    EXPECT_NEAR(u_of_y_delta(model, y, 1.0, 1e-4), 3.68182 + 0.441101, 2e-3);
    EXPECT_GE(u_of_y_delta(model, y, 6.0, 1e-4), 5.78571);
}

TEST(UOfYDelta, NoiselessGrowsFromZero) {
    const auto model = example_model();
    const Eigen::VectorXd y = model.H() * Eigen::Vector2d(0.3, 0.7);
    double prev = -1.0;
    for (double d : {1e-3, 0.1, 0.5, 1.0, 2.0}) {
        const double u = u_of_y_delta(model, y, d, 1e-6);
        EXPECT_GE(u, prev);
        prev = u;
    }
    EXPECT_LT(u_of_y_delta(model, y, 1e-3, 1e-8), 1e-5);
}

TEST(UOfYDelta, SandwichAgainstEstimatorAndUpperBound) {
    const auto model = example_model();
    OptimalEstimator est(model);
    std::mt19937_64 rng(62);
    std::normal_distribution<double> N(0.0, 3.0);
    const double eps = 1e-3;
    for (int t = 0; t < 50; ++t) {
        const Eigen::Vector4d y(N(rng), N(rng), N(rng), N(rng));
        const double u = u_of_y_delta(est, y, 1.0, eps);
        const auto s = est.search(y, 1.0, eps);
        EXPECT_GE(u, s.phi_final - eps);
    }
    const auto b = rate_bracket(model, 1.0, eps, 50, 7);
    EXPECT_LE(b.lower, b.upper + eps);
    EXPECT_EQ(b.samples, 51u);
}

TEST(AmbiguousObservation, Certificates) {
    std::mt19937_64 rng(derive_seed(63, 0));
    std::normal_distribution<double> N(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const int n = 1 + t % 3;
        const int q = 1 + t % 2;
        const int m = 2 * q + n + t % 3;
        const auto model = random_model(rng, m, n, q);
        Eigen::VectorXd x(n);
        for (auto& v : x) v = N(rng);
        const double delta = 0.1 + std::abs(N(rng));
        const auto a = ambiguous_observation(model, x, delta);
        EXPECT_NEAR((a.x0 - a.x1).norm(), 2.0 * delta, 1e-12 * (1.0 + delta));
        EXPECT_LE(a.d_x0, a.u_bar + 1e-9);
        EXPECT_LE(a.d_x1, a.u_bar + 1e-9);
        EXPECT_LE(static_cast<int>(a.I0.size()), q);
        EXPECT_LE(static_cast<int>(a.I1.size()), q);
    }
}

TEST(AmbiguousObservation, HomogeneousShape) {
    const auto model = homogeneous(5, 1);
    const auto a = ambiguous_observation(model, Eigen::VectorXd::Zero(1), 1.0);
    int zeros = 0, plus = 0, minus = 0;
    for (int i = 0; i < 5; ++i) {
        if (a.y_star(i) == 0.0) ++zeros;
        else if (a.y_star(i) > 0.0) ++plus;
        else ++minus;
    }
    EXPECT_EQ(zeros, 3);
    EXPECT_EQ(plus, 1);
    EXPECT_EQ(minus, 1);
    EXPECT_NEAR(a.d_x0, 1.5, 1e-12);
    EXPECT_NEAR(a.d_x1, 1.5, 1e-12);
}

TEST(AmbiguousObservation, DegenerateAndErrors) {
    const auto model = example_model();
    const Eigen::Vector2d x(1, 2);
    const auto a = ambiguous_observation(model, x, 0.0);
    EXPECT_EQ(a.x0, x);
    EXPECT_EQ(a.x1, x);
    EXPECT_LT((a.y_star - model.H() * x).norm(), 1e-15);
    EXPECT_THROW(ambiguous_observation(model, x, -1.0), ValidationError);
    Eigen::MatrixXd H(4, 2);
    H << 1, 0, 1, 0, 0, 1, 0, 1;
    EXPECT_THROW(ambiguous_observation(SensorModel(H, Eigen::VectorXd::Ones(4), 1), x, 1.0), ObservabilityError);
}

TEST(ObservabilityCounterexample, ZeroInconsistencyFarApart) {
    Eigen::MatrixXd H(4, 2);
    H << 1, 0, 1, 0, 0, 1, 0, 1;
    const SensorModel model(H, Eigen::VectorXd::Ones(4), 1);
    for (double delta : {1.0, 1e3, 1e8}) {
        const auto c = observability_counterexample(model, delta);
        EXPECT_NEAR((c.x2 - c.x1).norm(), 1.1 * delta, 1e-9 * delta);
        EXPECT_GT((c.x2 - c.x1).norm(), delta);
        EXPECT_LE(c.d_x1, 1e-10 * std::max(1.0, delta * delta));
        EXPECT_LE(c.d_x2, 1e-10 * std::max(1.0, delta * delta));
        EXPECT_NEAR(inconsistency(model, c.x1, c.y_star).value, 0.0, 1e-10 * std::max(1.0, delta * delta));
    }
    EXPECT_THROW(observability_counterexample(example_model(), 1.0), ValidationError);
    EXPECT_THROW(observability_counterexample(model, 0.0), ValidationError);
}

TEST(ObservabilityCounterexample, RandomDeficientModels) {
    std::mt19937_64 rng(derive_seed(64, 0));
    std::normal_distribution<double> N(0.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        // rows 0..m-2q-1 share a one-dimensional row space
        const int m = 5, n = 2, q = 1;
        Eigen::MatrixXd H(m, n);
        const Eigen::Vector2d dir(N(rng), N(rng));
        for (int i = 0; i < m; ++i) H.row(i) = i < m - 2 * q ? (N(rng) * dir).transpose() : Eigen::RowVector2d(N(rng), N(rng));
        Eigen::VectorXd W(m);
        for (auto& w : W) w = 0.5 + std::abs(N(rng));
        const SensorModel model(H, W, q);
        ASSERT_FALSE(model.observable());
        const auto c = observability_counterexample(model, 1.0 + t);
        EXPECT_LE(c.d_x1, 1e-10);
        EXPECT_LE(c.d_x2, 1e-10);
        EXPECT_GT((c.x1 - c.x2).norm(), 1.0 + t);
    }
}

TEST(EmpiricalRate, ExactExponential) {
    std::vector<RatePoint> pts;
    for (int k = 1; k <= 6; ++k) pts.push_back({k, std::exp(-2.0 * k), std::nullopt});
    const auto f = empirical_rate(pts);
    EXPECT_NEAR(f.rate, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 0.0, 1e-12);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
}

TEST(EmpiricalRate, FlatAndDroppedPoints) {
    const auto flat = empirical_rate({{1, 0.2, {}}, {2, 0.2, {}}, {3, 0.2, {}}});
    EXPECT_NEAR(flat.rate, 0.0, 1e-15);
    const auto f = empirical_rate({{1, 0.3, {}}, {2, 0.0, {}}, {3, 0.1, 1000}, {4, 0.004, 1000}, {5, 0.05, {}}, {6, 0.02, {}}});
    EXPECT_EQ(f.points_used, 4u);
    EXPECT_EQ(f.warnings.size(), 2u);
    EXPECT_THROW(empirical_rate({{1, 0.1, {}}, {2, 0.0, {}}, {3, 0.01, {}}}), ValidationError);
}
