#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "nqn/errors.hpp"
#include "nqn/linalg.hpp"
#include "nqn/noise.hpp"

namespace nqn {

/// A denominator is degenerate when |den| < 1e-14 x (product of operand norms).
inline constexpr double kDenominatorSafeguard = 1e-14;

inline bool is_degenerate(double denominator, double scale) {
    return !std::isfinite(denominator) || std::abs(denominator) < kDenominatorSafeguard * scale ||
           denominator == 0.0;
}

/// Memory of the previous step: p_{k-1}, mean gradient g_{k-1}, alpha_{k-1}.
struct LowRankState {
    Vector prev_direction;
    Vector prev_mean_grad;
    double prev_alpha = 0.0;

    bool empty() const { return prev_direction.size() == 0; }

    /// rho_hat = -1 / (alpha g^T p) from the secant condition. Throws
    /// DegenerateDenominator when the product vanishes or rho_hat <= 0.
    double secant_rho() const {
        const double gp = prev_mean_grad.dot(prev_direction);
        const double den = prev_alpha * gp;
        if (is_degenerate(den, std::abs(prev_alpha) * prev_mean_grad.norm() * prev_direction.norm()))
            throw DegenerateDenominator("secant rho: alpha g^T p vanishes");
        const double rho = -1.0 / den;
        if (!(rho > 0.0)) throw DegenerateDenominator("secant rho is not positive");
        return rho;
    }
};

inline Vector sd_direction(const GradientBatch& batch) { return -batch.mean; }

/// Direction from B_k = (I - a g_k p^T)(I - a p g_k^T), a = 1/(g_{k-1}^T p),
/// p = p_{k-1}. Writing M = I - a p g_k^T, B_k = M^T M and each factor is
/// inverted by Sherman-Morrison.
inline Vector symcg_direction(const LowRankState& state, const GradientBatch& batch) {
    if (state.empty()) throw InvalidArgument("symcg_direction: needs a previous step");
    const Vector& p = state.prev_direction;
    const Vector& g_prev = state.prev_mean_grad;
    const Vector& g = batch.mean;
    require_dimension(static_cast<std::size_t>(p.size()), static_cast<std::size_t>(g.size()));

    const double gp_prev = g_prev.dot(p);
    if (is_degenerate(gp_prev, g_prev.norm() * p.norm()))
        throw DegenerateDenominator("symcg: g_{k-1}^T p_{k-1} vanishes");
    const double a = 1.0 / gp_prev;
    const double gp = g.dot(p);
    // M = I - a p g^T is singular when a g^T p = 1.
    const double sm = 1.0 - a * gp;
    if (is_degenerate(sm, 1.0 + std::abs(a * gp)))
        throw DegenerateDenominator("symcg: B_k is singular");

    // M^{-T} = I + a g p^T / sm, M^{-1} = I + a p g^T / sm.
    const Vector z = g + (a * p.dot(g) / sm) * g;
    const Vector x = z + (a * g.dot(z) / sm) * p;
    return -x;
}

/// Dense symmetric CG matrix, for checks.
inline Matrix symcg_matrix(const LowRankState& state, const Vector& g) {
    const Vector& p = state.prev_direction;
    const double a = 1.0 / state.prev_mean_grad.dot(p);
    const auto n = p.size();
    const Matrix m = Matrix::Identity(n, n) - a * p * g.transpose();
    return m.transpose() * m;
}

/// Full-memory BFGS matrix B_k (B_0 = I), certified SPD.
struct BfgsState {
    SpdMatrix b_matrix;

    static BfgsState initial(std::size_t n) { return BfgsState{SpdMatrix::identity(n)}; }
    const SpdFactor& factor() const { return b_matrix.factor(); }
};

/// B_k = B_{k-1} + g g^T / (g^T p) + y y^T / (alpha y^T p), with g = g_{k-1},
/// p = p_{k-1}, y = g_k - g_{k-1}, all gradients batch means.
inline BfgsState bfgs_update(const BfgsState& state, const LowRankState& prev, const GradientBatch& batch) {
    if (prev.empty()) throw InvalidArgument("bfgs_update: needs a previous step");
    const Vector& p = prev.prev_direction;
    const Vector& g_prev = prev.prev_mean_grad;
    const Vector y = batch.mean - g_prev;

    const double gp = g_prev.dot(p);
    if (is_degenerate(gp, g_prev.norm() * p.norm()))
        throw CurvatureBreakdown("bfgs: g_{k-1}^T p_{k-1} vanishes");
    const double yp = prev.prev_alpha * y.dot(p);
    if (is_degenerate(yp, std::abs(prev.prev_alpha) * y.norm() * p.norm()))
        throw CurvatureBreakdown("bfgs: alpha (g_k - g_{k-1})^T p_{k-1} vanishes");

    Matrix b = state.b_matrix.entries();
    b.noalias() += (1.0 / gp) * g_prev * g_prev.transpose();
    b.noalias() += (1.0 / yp) * y * y.transpose();
    // Exact symmetry is required by the factorization.
    const Matrix sym = 0.5 * (b + b.transpose());
    return BfgsState{SpdMatrix(sym)};
}

inline Vector bfgs_direction(const BfgsState& state, const GradientBatch& batch) {
    return -state.factor().solve(batch.mean);
}

/// B = I - p p^T / (p^T p) + rho y y^T, solved through a rank-two Woodbury
/// system. Positive definite iff rho > 0 and y^T p != 0.
class MemorylessMatrix {
public:
    MemorylessMatrix(const Vector& p, const Vector& y, double rho)
        : p_(p), y_(y), rho_(rho), solver_(make_solver(p, y, rho)) {}

    Vector solve(const Vector& b) const { return solver_.apply(b); }
    Vector operator()(const Vector& b) const { return solve(b); }
    std::size_t order() const { return static_cast<std::size_t>(p_.size()); }

    Matrix dense() const {
        const auto n = p_.size();
        return Matrix::Identity(n, n) - (p_ * p_.transpose()) / p_.squaredNorm() + rho_ * y_ * y_.transpose();
    }

    double rho() const { return rho_; }

private:
    static WoodburySolver<IdentitySolve> make_solver(const Vector& p, const Vector& y, double rho) {
        require_dimension(static_cast<std::size_t>(p.size()), static_cast<std::size_t>(y.size()));
        if (!(rho > 0.0)) throw DegenerateDenominator("memoryless: rho must be positive");
        const double pp = p.squaredNorm();
        if (!(pp > 0.0)) throw DegenerateDenominator("memoryless: zero previous direction");
        if (is_degenerate(y.dot(p), y.norm() * p.norm()))
            throw DegenerateDenominator("memoryless: (g_k - g_{k-1})^T p_{k-1} vanishes");
        Matrix u(p.size(), 2);
        u.col(0) = p;
        u.col(1) = y;
        Matrix d = Matrix::Zero(2, 2);
        d(0, 0) = -1.0 / pp;
        d(1, 1) = rho;
        try {
            return WoodburySolver<IdentitySolve>(IdentitySolve{static_cast<std::size_t>(p.size())}, u, d);
        } catch (const SingularCapacitance& e) {
            throw DegenerateDenominator(std::string("memoryless: ") + e.what());
        }
    }

    Vector p_;
    Vector y_;
    double rho_;
    WoodburySolver<IdentitySolve> solver_;
};

/// Memoryless BFGS matrix at step k with the secant rho_hat_{k-1}.
inline MemorylessMatrix memoryless_matrix(const LowRankState& state, const Vector& g) {
    if (state.empty()) throw InvalidArgument("memoryless_matrix: needs a previous step");
    return MemorylessMatrix(state.prev_direction, g - state.prev_mean_grad, state.secant_rho());
}

inline Vector mlbfgs_direction(const LowRankState& state, const GradientBatch& batch) {
    return -memoryless_matrix(state, batch.mean).solve(batch.mean);
}

} // namespace nqn
