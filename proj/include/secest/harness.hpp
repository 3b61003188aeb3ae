// Monte Carlo worst-case error probability over an attack grid, the
// single-shot resilience sweep and the worker pool they run on.
#pragma once

#include "secest/errors.hpp"
#include "secest/estimators.hpp"
#include "secest/io.hpp"
#include "secest/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace secest {

inline constexpr const char* kWorkersEnv = "SECEST_WORKERS";

/// requested > 0 wins, then SECEST_WORKERS, then the hardware thread count.
inline int resolve_workers(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv(kWorkersEnv)) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) {
            throw ValidationError(std::string(kWorkersEnv) + " must be a positive integer, got '" + env + "'");
        }
        return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(cell, worker) for every cell in [0, count). Cells are handed out
/// dynamically; results must be written to per-cell slots.
template <class Body>
void parallel_cells(std::size_t count, int workers, Body&& body) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(count, 1))));
    if (workers == 1) {
        for (std::size_t c = 0; c < count; ++c) body(c, 0);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t c = next++; c < count && !failed; c = next++) body(c, w);
            } catch (...) {
                errors[w] = std::current_exception();
                failed = true;
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

enum class AttackKind { Pinned, Bias };

inline std::string to_string(AttackKind k) { return k == AttackKind::Pinned ? "pinned" : "bias"; }

inline AttackKind parse_attack_kind(const std::string& s) {
    if (s == "pinned") return AttackKind::Pinned;
    if (s == "bias") return AttackKind::Bias;
    throw ValidationError("unknown attack kind '" + s + "' (pinned, bias)");
}

struct WorstCaseSetup {
    int k = 1;
    double delta = 1.0;
    AttackKind attack = AttackKind::Pinned;
    std::vector<double> grid;  ///< pinned averages or constant biases on the compromised sensor
    long long trials = 100000;
    std::uint64_t seed = 0;
    int compromised = -1;     ///< -1: last sensor
    Eigen::VectorXd x_true;   ///< empty: zero state
    int workers = 0;          ///< 0: resolve_workers()
    long long batch = 4096;   ///< trials per parallel cell
};

struct WorstCaseResult {
    double e_hat = 0.0;        ///< max over the grid
    double worst_attack = 0.0;
    std::size_t worst_index = 0;
    double std_err = 0.0;      ///< sqrt(e(1-e)/trials) at the maximizer
    long long trials = 0;
    std::vector<double> per_grid;
    std::vector<long long> failures_per_grid;  ///< estimator exceptions, counted as errors
    long long failures = 0;
};

/// Estimates max over the grid of P(||f(avg Y(k)) - x|| > delta). The benign
/// averages are drawn directly as N(H x, W / k); the compromised sensor's
/// entry is the grid value (pinned) or its benign draw plus the grid value
/// (bias). Cell (g, b) draws from derive_seed(seed, g, b), so the counts do
/// not depend on the worker count and estimators see common random numbers.
/// `Est` is copied once per worker and called as Est(y) -> x_hat.
template <class Est>
WorstCaseResult worst_case_probability(const SensorModel& model, const Est& estimator, const WorstCaseSetup& setup) {
    if (setup.k < 1) throw ValidationError("k must be at least 1");
    if (!(setup.delta > 0.0)) throw ValidationError("delta must be positive");
    if (setup.grid.empty()) throw ValidationError("attack grid must be nonempty");
    if (setup.trials < 1) throw ValidationError("trials must be at least 1");
    if (setup.batch < 1) throw ValidationError("batch must be at least 1");
    const int m = model.m();
    const int j = setup.compromised < 0 ? m - 1 : setup.compromised;
    if (j >= m) throw ValidationError("compromised sensor index out of range");
    if (model.q() < 1) throw ValidationError("attack needs q >= 1");
    const Eigen::VectorXd x = setup.x_true.size() == 0 ? Eigen::VectorXd::Zero(model.n()) : setup.x_true;
    if (x.size() != model.n()) throw ValidationError("x_true dimension does not match H");

    const Eigen::VectorXd z = model.H() * x;
    const Eigen::VectorXd sd = (model.W() / double(setup.k)).cwiseSqrt();
    const std::size_t G = setup.grid.size();
    const auto batches = static_cast<std::size_t>((setup.trials + setup.batch - 1) / setup.batch);
    const int workers = resolve_workers(setup.workers);

    std::vector<long long> errors(G * batches, 0), fails(G * batches, 0);
    std::vector<Est> copies(static_cast<std::size_t>(std::max(1, workers)), estimator);
    parallel_cells(G * batches, workers, [&](std::size_t cell, int w) {
        const std::size_t g = cell / batches;
        const std::size_t b = cell % batches;
        const long long begin = static_cast<long long>(b) * setup.batch;
        const long long n = std::min(setup.batch, setup.trials - begin);
        std::mt19937_64 rng(derive_seed(setup.seed, g, b));
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd y(m);
        auto& est = copies[w];
        long long e = 0, f = 0;
        for (long long t = 0; t < n; ++t) {
            for (int i = 0; i < m; ++i) y(i) = z(i) + sd(i) * normal(rng);
            if (setup.attack == AttackKind::Pinned) {
                y(j) = setup.grid[g];
            } else {
                y(j) += setup.grid[g];
            }
            try {
                const Eigen::VectorXd xh = est(y);
                const double err = (xh - x).norm();
                if (!(err <= setup.delta)) ++e;
            } catch (const std::exception&) {
                ++e;
                ++f;
            }
        }
        errors[cell] = e;
        fails[cell] = f;
    });

    WorstCaseResult res;
    res.trials = setup.trials;
    res.per_grid.assign(G, 0.0);
    res.failures_per_grid.assign(G, 0);
    double best = -1.0;
    for (std::size_t g = 0; g < G; ++g) {
        long long e = 0, f = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            e += errors[g * batches + b];
            f += fails[g * batches + b];
        }
        res.per_grid[g] = double(e) / double(setup.trials);
        res.failures_per_grid[g] = f;
        res.failures += f;
        if (res.per_grid[g] > best) {
            best = res.per_grid[g];
            res.worst_index = g;
        }
    }
    res.e_hat = best;
    res.worst_attack = setup.grid[res.worst_index];
    res.std_err = std::sqrt(res.e_hat * (1.0 - res.e_hat) / double(setup.trials));
    return res;
}

struct SweepRow {
    double a = 0.0;
    std::vector<double> errors;  ///< one per estimator, ||x_hat - target||
};

struct SweepResult {
    std::vector<std::string> labels;
    Eigen::VectorXd target;  ///< least-squares estimate of the clean measurement
    std::vector<SweepRow> rows;
};

/// Column label for an estimator spec, e.g. "optimal[delta=1]".
inline std::string spec_label(const EstimatorSpec& s) {
    switch (s.method) {
        case Method::Optimal: return "optimal[delta=" + format_double(s.delta) + "]";
        case Method::Lasso: return "lasso";
        default: return to_string(s.method);
    }
}

/// Single-shot sweep y = z + a e_j over the grid; errors are measured against
/// the least-squares estimate of the clean z.
inline SweepResult resilience_sweep(const SensorModel& model, const std::vector<EstimatorSpec>& specs,
                                    const Eigen::VectorXd& z, int sensor, const std::vector<double>& grid) {
    if (z.size() != model.m()) throw ValidationError("clean measurement must have m entries");
    if (sensor < 0 || sensor >= model.m()) throw ValidationError("compromised sensor index out of range");
    if (grid.empty()) throw ValidationError("bias grid must be nonempty");
    if (specs.empty()) throw ValidationError("estimator list must be nonempty");
    SweepResult out;
    out.target = estimate_least_squares(model, z);
    std::vector<Estimator> ests;
    for (const auto& s : specs) {
        ests.emplace_back(model, s, 1);
        out.labels.push_back(spec_label(s));
    }
    for (double a : grid) {
        Eigen::VectorXd y = z;
        y(sensor) += a;
        SweepRow row;
        row.a = a;
        for (auto& e : ests) row.errors.push_back((e(y) - out.target).norm());
        out.rows.push_back(std::move(row));
    }
    return out;
}

/// Smallest grid value from which every later error in column `col` stays
/// below `threshold`; empty when the last row is not below it.
inline std::optional<double> zero_error_onset(const SweepResult& r, std::size_t col, double threshold = 1e-6) {
    std::optional<double> onset;
    for (auto it = r.rows.rbegin(); it != r.rows.rend(); ++it) {
        if (!(it->errors.at(col) < threshold)) break;
        onset = it->a;
    }
    return onset;
}

}  // namespace secest
