// Sensor/attack data model, 2q-observability validation, measurement
// synthesis and row averaging.
#pragma once

#include "secest/combinatorics.hpp"
#include "secest/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace secest {

/// Relative singular-value threshold for the full-column-rank test.
inline constexpr double kRankTolerance = 1e-9;

/// True iff `A` has full column rank: sigma_min > kRankTolerance * sigma_max.
inline bool full_column_rank(const Eigen::MatrixXd& A) {
    if (A.rows() < A.cols() || A.cols() == 0) return false;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const auto& s = svd.singularValues();
    const double smax = s(0);
    if (!(smax > 0.0)) return false;
    return s(s.size() - 1) > kRankTolerance * smax;
}

struct ObservabilityReport {
    std::vector<Subset> subsets;  ///< every (m-2q)-subset, lexicographic
    std::vector<bool> full_rank;  ///< parallel to `subsets`
    bool observable = true;

    /// First rank-deficient subset, or empty when observable.
    Subset first_deficient() const {
        for (std::size_t i = 0; i < subsets.size(); ++i)
            if (!full_rank[i]) return subsets[i];
        return {};
    }
};

/// Rows of `M` selected by `rows`.
inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& M, const Subset& rows) {
    Eigen::MatrixXd out(rows.size(), M.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = M.row(rows[r]);
    return out;
}

inline Eigen::VectorXd select(const Eigen::VectorXd& v, const Subset& idx) {
    Eigen::VectorXd out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) out(r) = v(idx[r]);
    return out;
}

/// Measurement matrix H (m x n), noise variances W (m, positive) and attack budget q.
///
/// A model that is not 2q-observable is still constructible; `observable()`
/// reports the violation so that rank-deficient diagnostics can run on it.
class SensorModel {
public:
    SensorModel(Eigen::MatrixXd H, Eigen::VectorXd W, int q) : H_(std::move(H)), W_(std::move(W)), q_(q) {
        const auto m = H_.rows();
        if (m < 1 || H_.cols() < 1) throw ValidationError("H must have at least one row and one column");
        if (W_.size() != m) {
            throw ValidationError("W has " + std::to_string(W_.size()) + " entries but H has " + std::to_string(m) +
                                  " rows");
        }
        if (q_ < 0) throw ValidationError("q must be nonnegative");
        if (2 * q_ >= m) throw ValidationError("attack budget must satisfy 2q < m");
        for (Eigen::Index i = 0; i < m; ++i) {
            if (!(W_(i) > 0.0) || !std::isfinite(W_(i))) {
                throw ValidationError("W[" + std::to_string(i) + "] must be a positive finite variance");
            }
        }
        if (!H_.allFinite()) throw ValidationError("H contains non-finite entries");
        report_ = check_observability(H_, q_);
    }

    int m() const { return static_cast<int>(H_.rows()); }
    int n() const { return static_cast<int>(H_.cols()); }
    int q() const { return q_; }
    const Eigen::MatrixXd& H() const { return H_; }
    const Eigen::VectorXd& W() const { return W_; }

    bool observable() const { return report_.observable; }
    const ObservabilityReport& observability() const { return report_; }

    /// Scalar state, H all ones, equal variances.
    bool homogeneous() const {
        if (n() != 1) return false;
        for (int i = 0; i < m(); ++i) {
            if (H_(i, 0) != 1.0 || W_(i) != W_(0)) return false;
        }
        return true;
    }

    static ObservabilityReport check_observability(const Eigen::MatrixXd& H, int q) {
        ObservabilityReport rep;
        const int m = static_cast<int>(H.rows());
        rep.subsets = combinations(m, m - 2 * q);
        rep.full_rank.reserve(rep.subsets.size());
        for (const auto& s : rep.subsets) {
            const bool ok = full_column_rank(select_rows(H, s));
            rep.full_rank.push_back(ok);
            rep.observable = rep.observable && ok;
        }
        return rep;
    }

private:
    Eigen::MatrixXd H_;
    Eigen::VectorXd W_;
    int q_;
    ObservabilityReport report_;
};

inline ObservabilityReport validate_observability(const SensorModel& model) { return model.observability(); }

/// m x k block of measurements, column t holding every sensor's reading at time t+1.
struct MeasurementBlock {
    Eigen::MatrixXd Y;

    explicit MeasurementBlock(Eigen::MatrixXd y) : Y(std::move(y)) {
        if (Y.cols() < 1) throw ValidationError("measurement block needs at least one column");
    }
    int k() const { return static_cast<int>(Y.cols()); }
    int m() const { return static_cast<int>(Y.rows()); }
};

namespace detail {

/// Mean over time taken relative to the first sample; a constant row
/// averages to itself bit for bit, which the pinned-value policy relies on.
inline double row_mean(const Eigen::MatrixXd& Y, Eigen::Index i) {
    const double a = Y(i, 0);
    double s = 0.0;
    for (Eigen::Index t = 1; t < Y.cols(); ++t) s += Y(i, t) - a;
    return a + s / double(Y.cols());
}

}  // namespace detail

/// Per-sensor empirical mean of the block.
inline Eigen::VectorXd avg(const MeasurementBlock& block) {
    Eigen::VectorXd out(block.m());
    for (int i = 0; i < block.m(); ++i) out(i) = detail::row_mean(block.Y, i);
    return out;
}

/// Same bias on every time step. Length m; nonzero only on the compromised set.
struct ConstantBias {
    Eigen::VectorXd bias;
};

/// Time-varying bias, m x k; rows outside the compromised set must be zero.
struct BiasSequence {
    Eigen::MatrixXd bias;
};

/// The attacker pins avg(Y) on the compromised sensors; `values` follows the
/// order of AttackScenario::compromised.
struct PinnedAverage {
    Eigen::VectorXd values;
};

using BiasPolicy = std::variant<ConstantBias, BiasSequence, PinnedAverage>;

struct AttackScenario {
    Eigen::VectorXd x_true;
    Subset compromised;
    BiasPolicy bias_policy = ConstantBias{};
    int k = 1;
    std::uint64_t seed = 0;

    /// Throws ValidationError when the scenario does not fit `model`.
    void validate(const SensorModel& model) const {
        if (x_true.size() != model.n()) throw ValidationError("x_true dimension does not match H");
        if (k < 1) throw ValidationError("horizon k must be at least 1");
        if (static_cast<int>(compromised.size()) > model.q()) {
            throw ValidationError("more compromised sensors than the attack budget q");
        }
        for (std::size_t i = 0; i < compromised.size(); ++i) {
            if (compromised[i] < 0 || compromised[i] >= model.m()) {
                throw ValidationError("compromised sensor index out of range");
            }
            if (i > 0 && compromised[i] <= compromised[i - 1]) {
                throw ValidationError("compromised set must be sorted and duplicate-free");
            }
        }
        const auto in_c = [&](int i) { return std::binary_search(compromised.begin(), compromised.end(), i); };
        std::visit(
            [&](const auto& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, ConstantBias>) {
                    if (p.bias.size() == 0) return;
                    if (p.bias.size() != model.m()) throw ValidationError("constant bias must have m entries");
                    for (int i = 0; i < model.m(); ++i)
                        if (p.bias(i) != 0.0 && !in_c(i))
                            throw ValidationError("bias touches sensor " + std::to_string(i) +
                                                  " outside the compromised set");
                } else if constexpr (std::is_same_v<P, BiasSequence>) {
                    if (p.bias.rows() != model.m() || p.bias.cols() != k)
                        throw ValidationError("bias sequence must be m x k");
                    for (int i = 0; i < model.m(); ++i)
                        if (!in_c(i) && (p.bias.row(i).array() != 0.0).any())
                            throw ValidationError("bias touches sensor " + std::to_string(i) +
                                                  " outside the compromised set");
                } else {
                    if (p.values.size() != static_cast<Eigen::Index>(compromised.size()))
                        throw ValidationError("pinned values must match the compromised set size");
                }
            },
            bias_policy);
    }
};

/// Mixes a base seed with stream indices (splitmix64 finalizer) so that
/// every (seed, cell, batch) triple gets an independent generator.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ b);
}

namespace detail {

/// Overwrites row `i` of Y with entries whose row mean is exactly `v`
/// under the same arithmetic `avg` uses.
inline void pin_row_average(Eigen::MatrixXd& Y, Eigen::Index i, double v) { Y.row(i).setConstant(v); }

}  // namespace detail

/// y_i(t) = H_i x + w_i(t) + a_i(t), w_i(t) ~ N(0, W_i) i.i.d.
template <class Rng>
MeasurementBlock synthesize(const SensorModel& model, const AttackScenario& scenario, Rng& rng) {
    scenario.validate(model);
    const int m = model.m();
    const int k = scenario.k;
    const Eigen::VectorXd z = model.H() * scenario.x_true;
    Eigen::MatrixXd Y(m, k);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 0; t < k; ++t)
        for (int i = 0; i < m; ++i) Y(i, t) = z(i) + std::sqrt(model.W()(i)) * normal(rng);

    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ConstantBias>) {
                if (p.bias.size() != 0) Y.colwise() += p.bias;
            } else if constexpr (std::is_same_v<P, BiasSequence>) {
                Y += p.bias;
            } else {
                for (std::size_t j = 0; j < scenario.compromised.size(); ++j)
                    detail::pin_row_average(Y, scenario.compromised[j], p.values(j));
            }
        },
        scenario.bias_policy);
    return MeasurementBlock(std::move(Y));
}

}  // namespace secest
