// Confidence regions X(y, phi) as unions of ellipsoids, their farthest-point
// distance and Chebyshev center / radius.
#pragma once

#include "secest/combinatorics.hpp"
#include "secest/errors.hpp"
#include "secest/inconsistency.hpp"
#include "secest/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace secest {

/// {x : (x - center)' shape (x - center) <= level}. level == 0 is a point piece.
struct Ellipsoid {
    Eigen::VectorXd center;
    Eigen::MatrixXd shape;
    double level = 0.0;
    Subset subset;

    bool is_point() const { return level == 0.0; }
    bool contains(const Eigen::VectorXd& x, double slack = 0.0) const {
        const Eigen::VectorXd d = x - center;
        return d.dot(shape * d) <= level + slack;
    }
};

struct ConfidenceRegion {
    std::vector<Ellipsoid> pieces;
    double phi = 0.0;
    Eigen::VectorXd y;

    bool empty() const { return pieces.empty(); }
    int dim() const { return pieces.empty() ? 0 : static_cast<int>(pieces.front().center.size()); }
};

/// Res(I) == phi within this relative tolerance makes a point piece.
inline bool residue_equals_level(double residue, double phi) {
    return std::abs(residue - phi) <= 1e-9 * std::max(1.0, std::abs(phi));
}

namespace detail {

inline void append_pieces(const SubsetTable& table, const Eigen::MatrixXd& centers, const Eigen::VectorXd& residues,
                          double phi, std::vector<Ellipsoid>& out) {
    for (std::size_t s = 0; s < table.size(); ++s) {
        const double res = residues(static_cast<Eigen::Index>(s));
        const bool point = residue_equals_level(res, phi);
        if (!point && res > phi) continue;
        out.push_back(Ellipsoid{centers.col(static_cast<Eigen::Index>(s)), table.variance(s),
                                point ? 0.0 : phi - res, table.subset(s)});
    }
}

}  // namespace detail

inline ConfidenceRegion build_region(const SubsetTable& table, const Eigen::VectorXd& y, double phi) {
    if (!(phi >= 0.0)) throw ValidationError("phi must be nonnegative");
    Eigen::MatrixXd centers;
    Eigen::VectorXd residues;
    table.evaluate(y, centers, residues);
    ConfidenceRegion r;
    r.phi = phi;
    r.y = y;
    detail::append_pieces(table, centers, residues, phi, r.pieces);
    return r;
}

inline ConfidenceRegion build_region(const SensorModel& model, const Eigen::VectorXd& y, double phi) {
    return build_region(SubsetTable(model), y, phi);
}

struct FarthestPoint {
    Eigen::VectorXd point;
    double distance = 0.0;
    /// KKT multiplier mu of (x - c) = mu * shape * (x - center); 0 for point pieces.
    double multiplier = 0.0;
};

/// Exact maximizer of ||x - c|| over one ellipsoid, with the shape's
/// eigendecomposition done once so repeated queries stay cheap.
class FarthestPointOracle {
public:
    explicit FarthestPointOracle(const Ellipsoid& e) : e_(&e) {
        if (e.is_point()) return;
        if (e.level < 0.0) throw ShapeError("ellipsoid level must be nonnegative");
        if (!e.shape.isApprox(e.shape.transpose(), 1e-10)) throw ShapeError("ellipsoid shape is not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.shape);
        lambda_ = es.eigenvalues();
        Q_ = es.eigenvectors();
        if (!(lambda_(0) > 0.0)) throw ShapeError("ellipsoid shape is not positive definite");
    }

    FarthestPointOracle(const Ellipsoid& e, Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors)
        : e_(&e), lambda_(std::move(eigenvalues)), Q_(std::move(eigenvectors)) {
        if (!e.is_point() && !(lambda_(0) > 0.0)) throw ShapeError("ellipsoid shape is not positive definite");
    }

    /// Distance from the center to the farthest point of the ellipsoid.
    double own_radius() const { return e_->is_point() ? 0.0 : std::sqrt(e_->level / lambda_(0)); }

    FarthestPoint operator()(const Eigen::VectorXd& c) const {
        if (e_->is_point()) return {e_->center, (e_->center - c).norm(), 0.0};
        const Eigen::Index n = lambda_.size();
        const double L = e_->level;
        const double l1 = lambda_(0);
        const Eigen::VectorXd d = Q_.transpose() * (c - e_->center);

        // z_i(t) = -d_i l1 / ((1+t) l_i - l1), g(t) = sum l_i z_i^2 decreasing in t > 0.
        auto g_of = [&](double t) {
            double g = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double den = (1.0 + t) * lambda_(i) - l1;
                const double zi = -d(i) * l1 / den;
                g += lambda_(i) * zi * zi;
            }
            return g;
        };

        Eigen::VectorXd z(n);
        double mu = 0.0;
        const double dn2 = d.squaredNorm();
        bool hard = dn2 == 0.0;
        double t_star = 0.0;
        if (!hard) {
            double t_hi = std::sqrt(l1 * dn2 / L);
            double t_lo = t_hi;
            const double t_floor = t_hi * 1e-18;
            while (t_lo > t_floor && !(g_of(t_lo) >= L)) t_lo *= 0.5;
            if (t_lo <= t_floor) {
                hard = true;
            } else {
                for (int it = 0; it < 400 && t_hi - t_lo > 1e-17 * t_hi; ++it) {
                    const double mid = (t_hi > 4.0 * t_lo) ? std::sqrt(t_lo * t_hi) : 0.5 * (t_lo + t_hi);
                    if (mid <= t_lo || mid >= t_hi) break;
                    (g_of(mid) >= L ? t_lo : t_hi) = mid;
                }
                t_star = 0.5 * (t_lo + t_hi);
                for (Eigen::Index i = 0; i < n; ++i) z(i) = -d(i) * l1 / ((1.0 + t_star) * lambda_(i) - l1);
                mu = (1.0 + t_star) / l1;
            }
        }
        if (hard) {
            // The query sits on the minor-stiffness axis plane: fill the
            // remaining constraint budget along the first eigenvector.
            double used = 0.0;
            z.setZero();
            for (Eigen::Index i = 0; i < n; ++i) {
                if (lambda_(i) > l1 * (1.0 + 1e-12)) {
                    z(i) = -d(i) * l1 / (lambda_(i) - l1);
                    used += lambda_(i) * z(i) * z(i);
                }
            }
            const double rest = std::max(0.0, L - used);
            const double sign = d(0) > 0.0 ? -1.0 : 1.0;
            z(0) = sign * std::sqrt(rest / l1);
            mu = 1.0 / l1;
        }
        const double q = z.dot(lambda_.cwiseProduct(z));
        if (q > 0.0) z *= std::sqrt(L / q);
        FarthestPoint out;
        out.point = e_->center + Q_ * z;
        out.distance = (z - d).norm();
        out.multiplier = mu;
        return out;
    }

private:
    const Ellipsoid* e_;
    Eigen::VectorXd lambda_;
    Eigen::MatrixXd Q_;
};

inline FarthestPoint farthest_point(const Ellipsoid& e, const Eigen::VectorXd& c) { return FarthestPointOracle(e)(c); }

namespace detail {

struct RegionOracle {
    std::vector<FarthestPointOracle> pieces;

    explicit RegionOracle(const ConfidenceRegion& r) {
        pieces.reserve(r.pieces.size());
        for (const auto& p : r.pieces) pieces.emplace_back(p);
    }

    /// Farthest point over the union; ties go to the lowest piece index.
    FarthestPoint operator()(const Eigen::VectorXd& c) const {
        FarthestPoint best;
        best.distance = -1.0;
        for (const auto& o : pieces) {
            auto fp = o(c);
            if (fp.distance > best.distance) best = std::move(fp);
        }
        return best;
    }
};

}  // namespace detail

inline double region_distance(const ConfidenceRegion& r, const Eigen::VectorXd& c) {
    if (r.empty()) throw EmptyRegionError("distance to an empty region");
    return detail::RegionOracle(r)(c).distance;
}

struct ChebyshevResult {
    Eigen::VectorXd center;
    double radius = 0.0;
    double lower_bound = 0.0;  ///< certified: radius - lower_bound is the duality gap
    int iterations = 0;
};

namespace detail {

/// Union of intervals on the real line.
inline ChebyshevResult chebyshev_1d(const ConfidenceRegion& r) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : r.pieces) {
        const double half = p.is_point() ? 0.0 : std::sqrt(p.level / p.shape(0, 0));
        lo = std::min(lo, p.center(0) - half);
        hi = std::max(hi, p.center(0) + half);
    }
    ChebyshevResult out;
    out.center = Eigen::VectorXd::Constant(1, 0.5 * (lo + hi));
    out.radius = 0.5 * (hi - lo);
    out.lower_bound = out.radius;
    return out;
}

/// Smallest ball enclosing a finite atom set, found by enumerating candidate
/// supports of at most n+1 atoms. Returns barycentric weights of the support
/// (zero elsewhere); the ball center is sum w_j atoms_j.
inline std::vector<double> meb_atoms(const std::vector<Eigen::VectorXd>& atoms) {
    const int K = static_cast<int>(atoms.size());
    const int n = static_cast<int>(atoms.front().size());
    std::vector<double> best_w(K, 0.0);
    double best_r2 = std::numeric_limits<double>::infinity();
    double scale2 = 0.0;
    for (const auto& a : atoms) scale2 = std::max(scale2, (a - atoms.front()).squaredNorm());
    const double slack = 1e-12 * scale2;

    Eigen::VectorXd c(n);
    std::vector<double> w(K);
    for (int size = 1; size <= std::min(n + 1, K); ++size) {
        for (const auto& sup : combinations(K, size)) {
            // center = x0 + V lambda with 2 V'V lambda = |v_i|^2
            const auto& x0 = atoms[sup[0]];
            Eigen::VectorXd lam;
            if (size == 1) {
                c = x0;
            } else {
                Eigen::MatrixXd V(n, size - 1);
                for (int i = 1; i < size; ++i) V.col(i - 1) = atoms[sup[i]] - x0;
                const Eigen::MatrixXd G = V.transpose() * V;
                Eigen::LDLT<Eigen::MatrixXd> ldlt(2.0 * G);
                if (ldlt.info() != Eigen::Success) continue;
                const auto dvec = ldlt.vectorD();
                if (dvec.minCoeff() <= 1e-14 * std::max(1.0, dvec.cwiseAbs().maxCoeff())) continue;
                lam = ldlt.solve(G.diagonal());
                if (lam.minCoeff() < -1e-12 || lam.sum() > 1.0 + 1e-12) continue;
                c = x0 + V * lam;
            }
            const double r2 = (c - x0).squaredNorm();
            if (r2 >= best_r2) continue;
            bool covers = true;
            for (int j = 0; j < K && covers; ++j) covers = (atoms[j] - c).squaredNorm() <= r2 + slack;
            if (!covers) continue;
            best_r2 = r2;
            std::fill(w.begin(), w.end(), 0.0);
            if (size == 1) {
                w[sup[0]] = 1.0;
            } else {
                double rest = 1.0;
                for (int i = 1; i < size; ++i) {
                    w[sup[i]] = std::max(0.0, lam(i - 1));
                    rest -= w[sup[i]];
                }
                w[sup[0]] = std::max(0.0, rest);
            }
            best_w = w;
        }
    }
    return best_w;
}

}  // namespace detail

/// Chebyshev center and radius of a nonempty region.
///
/// Minimizes f(c) = region_distance(r, c) by a cutting-plane scheme on the
/// minimum-enclosing-ball dual: the exact farthest-point oracle supplies new
/// support atoms and the upper bound f(c); the variance of the atoms under
/// the ball's barycentric weights is a lower bound. Stops when the gap is
/// below `tol` (relative to max(1, radius)).
inline ChebyshevResult chebyshev(const ConfidenceRegion& r, double tol = 1e-10, int max_iter = 10000) {
    if (r.empty()) throw EmptyRegionError("Chebyshev center of an empty region");
    if (!(tol > 0.0)) throw ValidationError("Chebyshev tolerance must be positive");
    if (r.dim() == 1) return detail::chebyshev_1d(r);

    const detail::RegionOracle oracle(r);

    // One piece whose own circumscribed ball covers the whole union decides it.
    std::size_t big = 0;
    for (std::size_t j = 1; j < r.pieces.size(); ++j)
        if (oracle.pieces[j].own_radius() > oracle.pieces[big].own_radius()) big = j;
    {
        const double own = oracle.pieces[big].own_radius();
        const auto far = oracle(r.pieces[big].center);
        if (far.distance <= own * (1.0 + 1e-13) + 1e-300) {
            return ChebyshevResult{r.pieces[big].center, std::max(own, far.distance), own, 0};
        }
    }

    const int n = r.dim();
    const std::size_t max_atoms = n <= 3 ? 16 : 12;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (const auto& p : r.pieces) c += p.center;
    c /= double(r.pieces.size());

    std::vector<Eigen::VectorXd> atoms;
    for (const auto& p : r.pieces)
        if (p.is_point()) atoms.push_back(p.center);
    atoms.push_back(oracle(c).point);

    ChebyshevResult best;
    best.radius = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iter; ++it) {
        const auto w = detail::meb_atoms(atoms);
        c.setZero();
        for (std::size_t j = 0; j < atoms.size(); ++j) c += w[j] * atoms[j];
        double dual = 0.0;
        for (std::size_t j = 0; j < atoms.size(); ++j) dual += w[j] * (atoms[j] - c).squaredNorm();
        auto far = oracle(c);
        if (far.distance < best.radius) {
            best.center = c;
            best.radius = far.distance;
        }
        best.lower_bound = std::max(best.lower_bound, std::sqrt(std::max(0.0, dual)));
        best.iterations = it;
        if (best.radius - best.lower_bound <= tol * std::max(1.0, best.radius)) return best;

        // Drop the atoms deepest inside the current ball, keeping the support.
        if (atoms.size() >= max_atoms) {
            std::vector<std::pair<double, std::size_t>> depth;
            for (std::size_t j = 0; j < atoms.size(); ++j)
                depth.push_back({w[j] > 0.0 ? -std::numeric_limits<double>::infinity() : -(atoms[j] - c).squaredNorm(), j});
            std::stable_sort(depth.begin(), depth.end());
            std::vector<Eigen::VectorXd> kept;
            for (std::size_t j = 0; j + 1 < max_atoms; ++j) kept.push_back(std::move(atoms[depth[j].second]));
            atoms = std::move(kept);
        }
        atoms.push_back(std::move(far.point));
    }
    throw ConvergenceError("Chebyshev solver hit its iteration cap", best.center, best.radius);
}

inline ChebyshevResult chebyshev(const SensorModel& model, const Eigen::VectorXd& y, double phi, double tol = 1e-10) {
    return chebyshev(build_region(model, y, phi), tol);
}

/// rad(X(y, phi)); 0 for a single point, nullopt when the region is empty.
inline std::optional<double> region_radius(const ConfidenceRegion& r, double tol = 1e-10) {
    if (r.empty()) return std::nullopt;
    return chebyshev(r, tol).radius;
}

struct RadiusSample {
    double phi = 0.0;
    std::optional<double> radius;  ///< nullopt: region empty
    int pieces = 0;
};

inline std::vector<RadiusSample> radius_curve(const SubsetTable& table, const Eigen::VectorXd& y,
                                              const std::vector<double>& phis, double tol = 1e-10) {
    if (phis.empty()) throw ValidationError("radius curve needs at least one phi");
    Eigen::MatrixXd centers;
    Eigen::VectorXd residues;
    table.evaluate(y, centers, residues);
    std::vector<RadiusSample> out;
    out.reserve(phis.size());
    for (double phi : phis) {
        ConfidenceRegion r;
        r.phi = phi;
        r.y = y;
        detail::append_pieces(table, centers, residues, phi, r.pieces);
        out.push_back({phi, region_radius(r, tol), static_cast<int>(r.pieces.size())});
    }
    return out;
}

inline std::vector<RadiusSample> radius_curve(const SensorModel& model, const Eigen::VectorXd& y,
                                              const std::vector<double>& phis, double tol = 1e-10) {
    return radius_curve(SubsetTable(model), y, phis, tol);
}

/// Radius increase across [lo, hi] after shrinking the bracket by bisection
/// toward its larger half. A discontinuity of rad(X(y, phi)) keeps its size;
/// steep continuous growth after a residue decays toward zero.
struct RadiusJump {
    double lo = 0.0, hi = 0.0;
    double size = 0.0;
};

inline RadiusJump refine_radius_jump(const SubsetTable& table, const Eigen::VectorXd& y, double lo, double hi,
                                     int steps = 40, double tol = 1e-10) {
    Eigen::MatrixXd centers;
    Eigen::VectorXd residues;
    table.evaluate(y, centers, residues);
    auto rad = [&](double phi) {
        ConfidenceRegion r;
        r.phi = phi;
        r.y = y;
        detail::append_pieces(table, centers, residues, phi, r.pieces);
        return region_radius(r, tol).value_or(0.0);
    };
    double rl = rad(lo), rh = rad(hi);
    for (int i = 0; i < steps; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double rm = rad(mid);
        if (rm - rl >= rh - rm) {
            hi = mid;
            rh = rm;
        } else {
            lo = mid;
            rl = rm;
        }
    }
    return {lo, hi, rh - rl};
}

/// Boundary polyline of a 2-D ellipsoid piece, `count` points, closed.
inline std::vector<Eigen::Vector2d> boundary_polyline(const Ellipsoid& e, int count) {
    std::vector<Eigen::Vector2d> pts;
    if (e.center.size() != 2) return pts;
    if (e.is_point()) {
        pts.emplace_back(e.center(0), e.center(1));
        return pts;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Eigen::Matrix2d(e.shape));
    const Eigen::Vector2d semi(std::sqrt(e.level / es.eigenvalues()(0)), std::sqrt(e.level / es.eigenvalues()(1)));
    for (int i = 0; i <= count; ++i) {
        const double t = 2.0 * M_PI * double(i % count) / double(count);
        const Eigen::Vector2d u(semi(0) * std::cos(t), semi(1) * std::sin(t));
        pts.push_back(Eigen::Vector2d(e.center(0), e.center(1)) + es.eigenvectors() * u);
    }
    return pts;
}

}  // namespace secest
