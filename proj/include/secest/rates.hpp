// Large-deviation rate quantities: the upper bound u_bar via subset
// eigenvalues, u(y, delta) by bisection, the adversarial constructions behind
// the bounds and empirical decay-rate fitting.
#pragma once

#include "secest/combinatorics.hpp"
#include "secest/errors.hpp"
#include "secest/estimators.hpp"
#include "secest/inconsistency.hpp"
#include "secest/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace secest {

struct UpperBoundRate {
    double u_bar_1 = 0.0;       ///< u_bar(delta) = delta^2 * u_bar_1
    Subset support;             ///< 2q sensors cancelled by the attack
    Eigen::VectorXd direction;  ///< unit x achieving the minimum
    bool degenerate = false;    ///< u_bar_1 == 0: some reduced system is rank deficient
    std::vector<std::string> warnings;

    double at(double delta) const { return delta * delta * u_bar_1; }
};

/// min over |S| = 2q of lambda_min(1/2 H_{M\S}' W_{M\S}^-1 H_{M\S}).
/// A rank-deficient model yields 0 with a warning rather than an error.
inline UpperBoundRate upper_bound_rate(const SensorModel& model) {
    UpperBoundRate out;
    out.u_bar_1 = std::numeric_limits<double>::infinity();
    const int m = model.m();
    for (auto& S : combinations(m, 2 * model.q())) {
        const Subset keep = complement(S, m);
        Eigen::MatrixXd Hw = select_rows(model.H(), keep);
        for (std::size_t r = 0; r < keep.size(); ++r) Hw.row(r) /= std::sqrt(model.W()(keep[r]));
        Eigen::MatrixXd V = 0.5 * Hw.transpose() * Hw;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (V + V.transpose()));
        const double lam = std::max(0.0, es.eigenvalues()(0));
        if (lam < out.u_bar_1) {
            out.u_bar_1 = lam;
            out.support = S;
            out.direction = es.eigenvectors().col(0);
        }
    }
    if (!model.observable()) {
        out.degenerate = true;
        out.u_bar_1 = 0.0;
        const Subset bad = model.observability().first_deficient();
        out.support = complement(bad, m);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(select_rows(model.H(), bad), Eigen::ComputeFullV);
        out.direction = svd.matrixV().col(model.n() - 1);
        out.warnings.push_back("model is not 2q-observable: H restricted to " + to_string(bad) +
                               " is rank deficient, so no estimator is resilient");
    }
    return out;
}

/// u(y, delta): the largest level phi >= upsilon whose region still has
/// radius <= delta, found by the same bracketing and bisection as the
/// optimal estimator (accuracy eps).
inline double u_of_y_delta(OptimalEstimator& est, const Eigen::VectorXd& y, double delta, double eps) {
    const PhiSearch s = est.search(y, delta, eps);
    return s.early_exit ? s.phi_final : s.phi_lo;
}

inline double u_of_y_delta(const SensorModel& model, const Eigen::VectorXd& y, double delta, double eps) {
    OptimalEstimator est(model);
    return u_of_y_delta(est, y, delta, eps);
}

struct AmbiguousObservation {
    Eigen::VectorXd y_star;
    Eigen::VectorXd x0;
    Eigen::VectorXd x1;
    Subset I0;  ///< sensors reporting H x0
    Subset I1;  ///< sensors reporting H x1
    double u_bar = 0.0;
    double d_x0 = 0.0;  ///< d_{x0}(y*)
    double d_x1 = 0.0;  ///< d_{x1}(y*)
};

/// Measurement that two states 2 delta apart explain equally well:
/// y* = H x off the minimizing support, H x0 on its first q sensors and
/// H x1 on the rest, with x0/x1 = x -/+ delta x*.
inline AmbiguousObservation ambiguous_observation(const SensorModel& model, const Eigen::VectorXd& x, double delta) {
    if (x.size() != model.n()) throw ValidationError("x dimension does not match H");
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ValidationError("delta must be a nonnegative finite number");
    if (!model.observable()) {
        throw ObservabilityError("ambiguous observation needs a 2q-observable model; H restricted to " +
                                 to_string(model.observability().first_deficient()) + " is rank deficient");
    }
    const auto ub = upper_bound_rate(model);
    AmbiguousObservation out;
    out.x0 = x - delta * ub.direction;
    out.x1 = x + delta * ub.direction;
    out.u_bar = ub.at(delta);
    out.y_star = model.H() * x;
    const int q = model.q();
    for (int j = 0; j < static_cast<int>(ub.support.size()); ++j) {
        const int i = ub.support[j];
        if (j < q) {
            out.I0.push_back(i);
            out.y_star(i) = model.H().row(i).dot(out.x0);
        } else {
            out.I1.push_back(i);
            out.y_star(i) = model.H().row(i).dot(out.x1);
        }
    }
    out.d_x0 = inconsistency(model, out.x0, out.y_star).value;
    out.d_x1 = inconsistency(model, out.x1, out.y_star).value;
    return out;
}

struct ObservabilityCounterexample {
    Eigen::VectorXd y_star;
    Eigen::VectorXd x1;
    Eigen::VectorXd x2;
    Subset deficient;  ///< rank-deficient (m-2q)-subset
    double d_x1 = 0.0;
    double d_x2 = 0.0;
};

/// For a model that is not 2q-observable: two states more than delta apart
/// with zero inconsistency against the same measurement. x2 - x1 lies in the
/// null space of the deficient subset with norm 1.1 delta.
inline ObservabilityCounterexample observability_counterexample(const SensorModel& model, double delta,
                                                                const Eigen::VectorXd& x1 = {}) {
    if (model.observable()) throw ValidationError("model is 2q-observable; no counterexample exists");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ValidationError("delta must be positive and finite");
    ObservabilityCounterexample out;
    out.x1 = x1.size() == 0 ? Eigen::VectorXd::Zero(model.n()) : x1;
    if (out.x1.size() != model.n()) throw ValidationError("x1 dimension does not match H");
    out.deficient = model.observability().first_deficient();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(select_rows(model.H(), out.deficient), Eigen::ComputeFullV);
    Eigen::VectorXd v = svd.matrixV().col(model.n() - 1);
    out.x2 = out.x1 + (1.1 * delta / v.norm()) * v;

    const Subset rest = complement(out.deficient, model.m());
    out.y_star = model.H() * out.x1;
    const int q = model.q();
    for (std::size_t j = q; j < rest.size(); ++j) out.y_star(rest[j]) = model.H().row(rest[j]).dot(out.x2);
    out.d_x1 = inconsistency(model, out.x1, out.y_star).value;
    out.d_x2 = inconsistency(model, out.x2, out.y_star).value;
    return out;
}

struct RatePoint {
    int k = 0;
    double e = 0.0;
    std::optional<long long> trials;  ///< lets the fit count error events
};

struct RateFit {
    double rate = 0.0;  ///< slope of -log e against k
    double intercept = 0.0;
    double r_squared = 1.0;
    std::size_t points_used = 0;
    std::vector<std::string> warnings;
};

/// Least-squares slope of -log e(k) against k. Points with e = 0, e >= 1 or
/// fewer than 10 observed events are dropped with a warning.
inline RateFit empirical_rate(const std::vector<RatePoint>& points) {
    RateFit fit;
    std::vector<double> ks, ls;
    for (const auto& p : points) {
        if (!(p.e > 0.0)) {
            fit.warnings.push_back("k=" + std::to_string(p.k) + ": no error events, dropped");
            continue;
        }
        if (!(p.e < 1.0)) {
            fit.warnings.push_back("k=" + std::to_string(p.k) + ": error probability 1, dropped");
            continue;
        }
        if (p.trials && std::llround(p.e * double(*p.trials)) < 10) {
            fit.warnings.push_back("k=" + std::to_string(p.k) + ": fewer than 10 error events, dropped");
            continue;
        }
        ks.push_back(p.k);
        ls.push_back(-std::log(p.e));
    }
    if (ks.size() < 3) throw ValidationError("rate fit needs at least 3 points with 0 < e < 1");
    const double n = double(ks.size());
    double mk = 0.0, ml = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        mk += ks[i];
        ml += ls[i];
    }
    mk /= n;
    ml /= n;
    double skk = 0.0, skl = 0.0, sll = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        skk += (ks[i] - mk) * (ks[i] - mk);
        skl += (ks[i] - mk) * (ls[i] - ml);
        sll += (ls[i] - ml) * (ls[i] - ml);
    }
    if (skk == 0.0) throw ValidationError("rate fit needs at least two distinct k values");
    fit.rate = skl / skk;
    fit.intercept = ml - fit.rate * mk;
    fit.r_squared = sll == 0.0 ? 1.0 : skl * skl / (skk * sll);
    fit.points_used = ks.size();
    return fit;
}

struct RateBracket {
    double lower = 0.0;  ///< min over sampled y of u(y, delta)
    double upper = 0.0;  ///< u_bar(delta)
    std::size_t samples = 0;
};

/// Brackets u(delta) = inf_y u(y, delta) between the sampled minimum (the
/// ambiguous observation plus `random_draws` Gaussian measurements around
/// H x for random x) and u_bar(delta).
inline RateBracket rate_bracket(const SensorModel& model, double delta, double eps, int random_draws,
                                std::uint64_t seed) {
    if (random_draws < 0) throw ValidationError("random_draws must be nonnegative");
    OptimalEstimator est(model);
    RateBracket b;
    b.upper = upper_bound_rate(model).at(delta);
    const auto amb = ambiguous_observation(model, Eigen::VectorXd::Zero(model.n()), delta);
    b.lower = u_of_y_delta(est, amb.y_star, delta, eps);
    b.samples = 1;
    std::mt19937_64 rng(derive_seed(seed, 0x7261746573ULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < random_draws; ++r) {
        Eigen::VectorXd x(model.n());
        for (auto& v : x) v = normal(rng);
        Eigen::VectorXd y = model.H() * x;
        for (int i = 0; i < model.m(); ++i) y(i) += std::sqrt(model.W()(i)) * normal(rng);
        b.lower = std::min(b.lower, u_of_y_delta(est, y, delta, eps));
        ++b.samples;
    }
    return b;
}

struct RateReport {
    double u_bar_1 = 0.0;
    Subset argmin_support;
    std::optional<double> u_y_delta;
    std::optional<RateFit> empirical;
    std::optional<RateBracket> bracket;
    std::vector<std::string> warnings;
};

}  // namespace secest
