// Resilient estimators: the approximate Chebyshev-center estimator driven by
// bisection on the inconsistency level, the trimmed mean, weighted least
// squares and the LASSO baseline.
#pragma once

#include "secest/combinatorics.hpp"
#include "secest/errors.hpp"
#include "secest/geometry.hpp"
#include "secest/inconsistency.hpp"
#include "secest/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace secest {

enum class Method { Optimal, TrimmedMean, LeastSquares, Lasso };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::Optimal: return "optimal";
        case Method::TrimmedMean: return "trimmed";
        case Method::LeastSquares: return "ls";
        case Method::Lasso: return "lasso";
    }
    return "unknown";
}

inline Method parse_method(const std::string& s) {
    if (s == "optimal") return Method::Optimal;
    if (s == "trimmed") return Method::TrimmedMean;
    if (s == "ls") return Method::LeastSquares;
    if (s == "lasso") return Method::Lasso;
    throw ValidationError("unknown estimator method '" + s + "' (expected optimal|trimmed|ls|lasso)");
}

struct EstimateReport {
    Eigen::VectorXd estimate;
    Method method = Method::Optimal;
    double phi_final = std::numeric_limits<double>::quiet_NaN();
    double radius_final = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    std::vector<Subset> subsets_active;
};

/// Radius of X(y, phi) equal to delta within this tolerance stops the bisection early.
inline double radius_match_tolerance(double delta) { return 1e-6 * std::max(1.0, delta); }

/// Outcome of the bracketing + bisection search on phi.
struct PhiSearch {
    double upsilon = 0.0;    ///< smallest subset residue
    double phi_lo = 0.0;     ///< rad(X(y, phi_lo)) <= delta
    double phi_hi = 0.0;     ///< rad(X(y, phi_hi)) > delta (unless early exit)
    double phi_final = 0.0;  ///< level whose region's Chebyshev center is the estimate
    bool early_exit = false;
    int bracket_steps = 0;
    int bisection_steps = 0;
};

/// Bisection on the inconsistency level phi so that rad(X(y, phi)) stays
/// within delta. Holds the per-model subset cache and scratch storage, so one
/// instance should not be shared between threads; copies are independent.
class OptimalEstimator {
public:
    explicit OptimalEstimator(const SensorModel& model, double cheb_tol = 1e-10)
        : model_(&model), cheb_tol_(cheb_tol) {
        if (!model.observable()) {
            throw ObservabilityError(
                "model is not 2q-observable (subset " + to_string(model.observability().first_deficient()) +
                " is rank deficient); the confidence region can be empty for every delta");
        }
        table_ = std::make_shared<const SubsetTable>(model);
    }

    const SubsetTable& table() const { return *table_; }

    /// Loads the per-subset centers and residues of y.
    void load(const Eigen::VectorXd& y) {
        if (y.size() != model_->m()) throw ValidationError("y must have m entries");
        y_ = y;
        table_->evaluate(y, centers_, residues_);
    }

    double upsilon() const { return residues_.minCoeff(); }

    /// Pieces of X(y, phi) for the loaded y.
    ConfidenceRegion region(double phi) const {
        ConfidenceRegion r;
        r.phi = phi;
        r.y = y_;
        detail::append_pieces(*table_, centers_, residues_, phi, r.pieces);
        return r;
    }

    /// rad(X(y, phi)) for the loaded y; negative when the region is empty.
    double radius(double phi) const {
        if (model_->n() == 1) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (Eigen::Index s = 0; s < residues_.size(); ++s) {
                const double res = residues_(s);
                const bool point = residue_equals_level(res, phi);
                if (!point && res > phi) continue;
                const double half = point ? 0.0 : std::sqrt((phi - res) / table_->variance(s)(0, 0));
                lo = std::min(lo, centers_(0, s) - half);
                hi = std::max(hi, centers_(0, s) + half);
            }
            return lo <= hi ? 0.5 * (hi - lo) : -1.0;
        }
        const auto r = region(phi);
        if (r.empty()) return -1.0;
        return chebyshev(r, cheb_tol_).radius;
    }

    PhiSearch search(const Eigen::VectorXd& y, double delta, double eps) {
        if (!(delta > 0.0)) throw ValidationError("delta must be positive");
        if (!(eps > 0.0)) throw ValidationError("eps must be positive");
        load(y);
        PhiSearch s;
        s.upsilon = upsilon();
        s.phi_lo = s.upsilon;
        const double match = radius_match_tolerance(delta);

        double step = 1.0;
        s.phi_hi = s.upsilon + step;
        while (!(radius(s.phi_hi) > delta)) {
            if (++s.bracket_steps > 60) {
                throw NumericalError("could not bracket phi: radius stays below delta up to phi = " +
                                     std::to_string(s.phi_hi));
            }
            s.phi_lo = s.phi_hi;
            step *= 2.0;
            s.phi_hi = s.upsilon + step;
        }
        while (true) {
            if (s.phi_hi - s.phi_lo < eps / 2.0) {
                s.phi_final = std::max(s.upsilon, s.phi_lo - eps / 2.0);
                return s;
            }
            const double phi = 0.5 * (s.phi_lo + s.phi_hi);
            ++s.bisection_steps;
            const double rad = radius(phi);
            if (std::abs(rad - delta) <= match) {
                s.phi_final = phi;
                s.phi_lo = phi;
                s.early_exit = true;
                return s;
            }
            (rad > delta ? s.phi_hi : s.phi_lo) = phi;
        }
    }

    /// Estimate only, for Monte Carlo loops.
    Eigen::VectorXd estimate(const Eigen::VectorXd& y, double delta, double eps) {
        const auto s = search(y, delta, eps);
        return center(s.phi_final);
    }

    EstimateReport report(const Eigen::VectorXd& y, double delta, double eps) {
        const auto s = search(y, delta, eps);
        const auto r = region(s.phi_final);
        const auto cheb = chebyshev(r, cheb_tol_);
        EstimateReport rep;
        rep.method = Method::Optimal;
        rep.estimate = cheb.center;
        rep.phi_final = s.phi_final;
        rep.radius_final = cheb.radius;
        rep.iterations = s.bracket_steps + s.bisection_steps;
        for (const auto& p : r.pieces) rep.subsets_active.push_back(p.subset);
        return rep;
    }

private:
    Eigen::VectorXd center(double phi) const {
        const auto r = region(phi);
        return chebyshev(r, cheb_tol_).center;
    }

    const SensorModel* model_;
    double cheb_tol_;
    std::shared_ptr<const SubsetTable> table_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd centers_;
    Eigen::VectorXd residues_;
};

inline EstimateReport estimate_optimal(const SensorModel& model, const Eigen::VectorXd& y, double delta, double eps) {
    OptimalEstimator est(model);
    return est.report(y, delta, eps);
}

/// Mean of the order statistics q+1 .. m-q (1-indexed) of y.
inline double trimmed_mean(const Eigen::VectorXd& y, int q) {
    const auto m = static_cast<int>(y.size());
    if (q < 0 || 2 * q >= m) throw ValidationError("trimmed mean needs 0 <= 2q < m");
    std::vector<std::pair<double, int>> v(m);
    for (int i = 0; i < m; ++i) v[i] = {y(i), i};
    std::stable_sort(v.begin(), v.end());
    double s = 0.0;
    for (int i = q; i < m - q; ++i) s += v[i].first;
    return s / double(m - 2 * q);
}

inline double estimate_trimmed_mean(const SensorModel& model, const Eigen::VectorXd& y) {
    if (!model.homogeneous()) {
        throw ValidationError("trimmed mean requires a homogeneous scalar model (H all ones, equal W)");
    }
    if (y.size() != model.m()) throw ValidationError("y must have m entries");
    return trimmed_mean(y, model.q());
}

/// (H' W^-1 H)^-1 H' W^-1 y
inline Eigen::VectorXd estimate_least_squares(const SensorModel& model, const Eigen::VectorXd& y) {
    if (y.size() != model.m()) throw ValidationError("y must have m entries");
    Eigen::MatrixXd Hw = model.H();
    Eigen::VectorXd yw = y;
    for (int i = 0; i < model.m(); ++i) {
        const double s = 1.0 / std::sqrt(model.W()(i));
        Hw.row(i) *= s;
        yw(i) *= s;
    }
    if (!full_column_rank(Hw)) throw SingularFitError("least squares: H is rank deficient");
    return Hw.colPivHouseholderQr().solve(yw);
}

struct LassoResult {
    Eigen::VectorXd x;
    Eigen::VectorXd a;
    double objective = 0.0;
    int iterations = 0;
};

/// LASSO objective ||(W/k)^{-1/2} (y - Hx - a)||^2 + lambda ||a||_1.
inline double lasso_objective(const SensorModel& model, const Eigen::VectorXd& y, int k, double lambda,
                              const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
    const Eigen::VectorXd r = y - model.H() * x - a;
    double v = 0.0;
    for (int i = 0; i < model.m(); ++i) v += double(k) * r(i) * r(i) / model.W()(i);
    return v + lambda * a.lpNorm<1>();
}

/// Minimizes the LASSO program. For fixed x the optimal a is a soft
/// threshold of the residual, which leaves a Huber loss in x; that is
/// minimized by Newton steps with an exact piecewise-quadratic line search.
inline LassoResult estimate_lasso(const SensorModel& model, const Eigen::VectorXd& y, int k, double lambda,
                                  double tol = 1e-12, int max_iter = 500) {
    if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
    if (k < 1) throw ValidationError("k must be at least 1");
    if (y.size() != model.m()) throw ValidationError("y must have m entries");
    const int m = model.m();
    const auto& H = model.H();
    Eigen::VectorXd w(m), tau(m);
    for (int i = 0; i < m; ++i) {
        w(i) = double(k) / model.W()(i);
        tau(i) = lambda / (2.0 * w(i));
    }
    auto huber = [&](const Eigen::VectorXd& r) {
        double g = 0.0;
        for (int i = 0; i < m; ++i) {
            const double ar = std::abs(r(i));
            g += ar <= tau(i) ? w(i) * ar * ar : lambda * ar - 0.5 * lambda * tau(i);
        }
        return g;
    };
    auto psi = [&](int i, double r) {
        return std::abs(r) <= tau(i) ? 2.0 * w(i) * r : (r > 0.0 ? lambda : -lambda);
    };

    Eigen::VectorXd x = estimate_least_squares(model, y);
    Eigen::VectorXd r = y - H * x;
    double g = huber(r);
    const double scale = 1.0 + H.cwiseAbs().maxCoeff() * (lambda + 2.0 * w.maxCoeff() * r.cwiseAbs().maxCoeff());
    int it = 0;
    for (; it < max_iter; ++it) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.n());
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(model.n(), model.n());
        for (int i = 0; i < m; ++i) {
            grad -= psi(i, r(i)) * H.row(i).transpose();
            if (std::abs(r(i)) <= tau(i)) hess += 2.0 * w(i) * H.row(i).transpose() * H.row(i);
        }
        if (grad.norm() <= 1e-15 * scale) break;

        // Newton on the range of the Hessian, steepest descent on its null space.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
        const double cut = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        Eigen::VectorXd d = Eigen::VectorXd::Zero(model.n());
        for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
            const Eigen::VectorXd v = es.eigenvectors().col(j);
            const double gv = v.dot(grad);
            d -= (es.eigenvalues()(j) > cut ? gv / es.eigenvalues()(j) : gv) * v;
        }
        const Eigen::VectorXd s = H * d;

        // phi'(t) = -sum psi_i(r_i - t s_i) s_i is piecewise linear and nondecreasing.
        auto dphi = [&](double t) {
            double v = 0.0;
            for (int i = 0; i < m; ++i) v -= psi(i, r(i) - t * s(i)) * s(i);
            return v;
        };
        if (dphi(0.0) >= 0.0) break;
        std::vector<double> bps;
        for (int i = 0; i < m; ++i) {
            if (s(i) == 0.0) continue;
            for (double b : {(r(i) - tau(i)) / s(i), (r(i) + tau(i)) / s(i)})
                if (b > 0.0) bps.push_back(b);
        }
        std::sort(bps.begin(), bps.end());
        double t0 = 0.0, v0 = dphi(0.0), t_star = -1.0;
        for (double b : bps) {
            const double vb = dphi(b);
            if (vb >= 0.0) {
                t_star = vb == v0 ? b : t0 + (b - t0) * (-v0) / (vb - v0);
                break;
            }
            t0 = b;
            v0 = vb;
        }
        if (t_star < 0.0) {
            const double t1 = t0 + 1.0;
            const double slope = dphi(t1) - v0;
            if (!(slope > 0.0)) throw NumericalError("LASSO line search found no minimizer along the direction");
            t_star = t0 - v0 / slope;
        }
        const Eigen::VectorXd x_new = x + t_star * d;
        const Eigen::VectorXd r_new = y - H * x_new;
        const double g_new = huber(r_new);
        if (!(g_new <= g)) break;
        const double decrease = g - g_new;
        x = x_new;
        r = r_new;
        g = g_new;
        if (decrease <= tol * std::max(1.0, g)) break;
    }
    if (it >= max_iter) throw ConvergenceError("LASSO solver hit its iteration cap", x, g);

    LassoResult out;
    out.x = x;
    out.a.resize(m);
    for (int i = 0; i < m; ++i) {
        const double ar = std::abs(r(i));
        out.a(i) = ar > tau(i) ? std::copysign(ar - tau(i), r(i)) : 0.0;
    }
    out.objective = lasso_objective(model, y, k, lambda, out.x, out.a);
    out.iterations = it;
    return out;
}

/// Estimator choice plus its tuning knobs.
struct EstimatorSpec {
    Method method = Method::Optimal;
    double delta = 1.0;
    double eps = 1e-3;
    double lambda = 1e-3;

    std::string label() const { return to_string(method); }
};

/// Callable estimator y -> x_hat bound to a model, an estimator spec and the
/// horizon k (the LASSO weights depend on it). Each copy owns its scratch state.
class Estimator {
public:
    Estimator(const SensorModel& model, EstimatorSpec spec, int k = 1) : model_(&model), spec_(spec), k_(k) {
        if (k < 1) throw ValidationError("k must be at least 1");
        switch (spec.method) {
            case Method::Optimal:
                if (!(spec.delta > 0.0) || !(spec.eps > 0.0))
                    throw ValidationError("optimal estimator needs delta > 0 and eps > 0");
                optimal_ = OptimalEstimator(model);
                break;
            case Method::TrimmedMean:
                if (!model.homogeneous())
                    throw ValidationError("trimmed mean requires a homogeneous scalar model (H all ones, equal W)");
                break;
            case Method::LeastSquares: break;
            case Method::Lasso:
                if (!(spec.lambda > 0.0)) throw ValidationError("lambda must be positive");
                break;
        }
    }

    const EstimatorSpec& spec() const { return spec_; }

    Eigen::VectorXd operator()(const Eigen::VectorXd& y) {
        switch (spec_.method) {
            case Method::Optimal: return optimal_->estimate(y, spec_.delta, spec_.eps);
            case Method::TrimmedMean: return Eigen::VectorXd::Constant(1, trimmed_mean(y, model_->q()));
            case Method::LeastSquares: return estimate_least_squares(*model_, y);
            case Method::Lasso: return estimate_lasso(*model_, y, k_, spec_.lambda).x;
        }
        return {};
    }

    EstimateReport report(const Eigen::VectorXd& y) {
        if (spec_.method == Method::Optimal) return optimal_->report(y, spec_.delta, spec_.eps);
        EstimateReport rep;
        rep.method = spec_.method;
        if (spec_.method == Method::Lasso) {
            auto res = estimate_lasso(*model_, y, k_, spec_.lambda);
            rep.estimate = res.x;
            rep.iterations = res.iterations;
        } else {
            rep.estimate = (*this)(y);
        }
        return rep;
    }

private:
    const SensorModel* model_;
    EstimatorSpec spec_;
    int k_;
    std::optional<OptimalEstimator> optimal_;
};

}  // namespace secest
