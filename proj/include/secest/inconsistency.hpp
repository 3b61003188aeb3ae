// Weighted least squares over sensor subsets: restricted inconsistency,
// the subset fit (gain, variance, residue) and the full inconsistency d_x(y).
#pragma once

#include "secest/combinatorics.hpp"
#include "secest/errors.hpp"
#include "secest/model.hpp"

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace secest {

/// 1/2 * sum_{i in subset} (y_i - H_i x)^2 / W_i
inline double restricted_inconsistency(const SensorModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                       const Subset& subset) {
    if (subset.empty()) throw ValidationError("restricted inconsistency needs a nonempty subset");
    double s = 0.0;
    for (int i : subset) {
        const double r = y(i) - model.H().row(i).dot(x);
        s += r * r / model.W()(i);
    }
    return 0.5 * s;
}

/// Closed-form WLS fit of y restricted to `subset`:
/// d_x(y, I) = (x - wls_point)' variance (x - wls_point) + residue.
struct SubsetFit {
    Subset subset;
    Eigen::MatrixXd kappa;     ///< n x |I| gain, (H_I' W_I^-1 H_I)^-1 H_I' W_I^-1
    Eigen::MatrixXd variance;  ///< 1/2 H_I' W_I^-1 H_I
    double residue = 0.0;
    Eigen::VectorXd wls_point;
};

namespace detail {

/// y-independent part of a subset fit.
struct SubsetGain {
    Subset subset;
    Eigen::MatrixXd kappa;
    Eigen::MatrixXd variance;
};

inline SubsetGain subset_gain(const SensorModel& model, const Subset& subset) {
    if (subset.empty()) throw ValidationError("subset fit needs a nonempty subset");
    Eigen::MatrixXd Hw = select_rows(model.H(), subset);
    Eigen::VectorXd inv_sd(subset.size());
    for (std::size_t r = 0; r < subset.size(); ++r) {
        inv_sd(r) = 1.0 / std::sqrt(model.W()(subset[r]));
        Hw.row(r) *= inv_sd(r);
    }
    if (!full_column_rank(Hw)) throw SingularFitError("H restricted to " + to_string(subset) + " is rank deficient");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Hw);
    const auto k = static_cast<Eigen::Index>(subset.size());
    Eigen::MatrixXd pinv = qr.solve(Eigen::MatrixXd::Identity(k, k));
    SubsetGain g;
    g.subset = subset;
    g.kappa = pinv * inv_sd.asDiagonal();
    g.variance = 0.5 * Hw.transpose() * Hw;
    g.variance = 0.5 * (g.variance + g.variance.transpose()).eval();
    return g;
}

}  // namespace detail

inline SubsetFit subset_fit(const SensorModel& model, const Eigen::VectorXd& y, const Subset& subset) {
    if (static_cast<int>(subset.size()) < model.m() - 2 * model.q()) {
        throw ValidationError("subset fit needs at least m-2q sensors");
    }
    auto g = detail::subset_gain(model, subset);
    SubsetFit fit;
    fit.subset = subset;
    fit.wls_point = g.kappa * select(y, subset);
    fit.residue = restricted_inconsistency(model, fit.wls_point, y, subset);
    fit.kappa = std::move(g.kappa);
    fit.variance = std::move(g.variance);
    return fit;
}

/// Gains and variances of every (m-q)-subset, cached per model since they do
/// not depend on y. Evaluating a measurement only costs the weighted sums.
class SubsetTable {
public:
    explicit SubsetTable(const SensorModel& model) : model_(&model) {
        for (auto& s : combinations(model.m(), model.m() - model.q())) {
            auto g = detail::subset_gain(model, s);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.variance);
            eigvals_.push_back(es.eigenvalues());
            eigvecs_.push_back(es.eigenvectors());
            gains_.push_back(std::move(g));
        }
    }

    const SensorModel& model() const { return *model_; }
    std::size_t size() const { return gains_.size(); }
    const Subset& subset(std::size_t s) const { return gains_[s].subset; }
    const Eigen::MatrixXd& kappa(std::size_t s) const { return gains_[s].kappa; }
    const Eigen::MatrixXd& variance(std::size_t s) const { return gains_[s].variance; }
    /// Ascending eigenvalues / matching eigenvectors of variance(s).
    const Eigen::VectorXd& eigenvalues(std::size_t s) const { return eigvals_[s]; }
    const Eigen::MatrixXd& eigenvectors(std::size_t s) const { return eigvecs_[s]; }

    /// WLS centers (n x size) and residues for measurement y. Reuses the
    /// caller's storage once it has the right shape.
    void evaluate(const Eigen::VectorXd& y, Eigen::MatrixXd& centers, Eigen::VectorXd& residues) const {
        const auto& H = model_->H();
        const auto& W = model_->W();
        const auto n = H.cols();
        const auto S = static_cast<Eigen::Index>(gains_.size());
        if (centers.rows() != n || centers.cols() != S) centers.resize(n, S);
        if (residues.size() != S) residues.resize(S);
        for (Eigen::Index s = 0; s < S; ++s) {
            const auto& g = gains_[s];
            for (Eigen::Index a = 0; a < n; ++a) {
                double v = 0.0;
                for (std::size_t j = 0; j < g.subset.size(); ++j) v += g.kappa(a, j) * y(g.subset[j]);
                centers(a, s) = v;
            }
            double res = 0.0;
            for (int i : g.subset) {
                double r = y(i);
                for (Eigen::Index a = 0; a < n; ++a) r -= H(i, a) * centers(a, s);
                res += r * r / W(i);
            }
            residues(s) = 0.5 * res;
        }
    }

private:
    const SensorModel* model_;
    std::vector<detail::SubsetGain> gains_;
    std::vector<Eigen::VectorXd> eigvals_;
    std::vector<Eigen::MatrixXd> eigvecs_;
};

struct InconsistencyResult {
    double value = 0.0;
    Subset argmin_subset;
};

/// d_x(y): minimum over |I| = m-q of d_x(y, I). The lexicographically first
/// minimizing subset is reported.
inline InconsistencyResult inconsistency(const SensorModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const int m = model.m();
    Eigen::VectorXd term(m);
    for (int i = 0; i < m; ++i) {
        const double r = y(i) - model.H().row(i).dot(x);
        term(i) = 0.5 * r * r / model.W()(i);
    }
    InconsistencyResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (auto& s : combinations(m, m - model.q())) {
        double v = 0.0;
        for (int i : s) v += term(i);
        if (v < best.value) {
            best.value = v;
            best.argmin_subset = std::move(s);
        }
    }
    return best;
}

}  // namespace secest
