#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>

#include <Eigen/Dense>

#include "nqn/errors.hpp"

namespace nqn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Relative pivot tolerance of the Cholesky factorization (times max diagonal).
inline constexpr double kPivotTolerance = 1e-13;

/// Relative determinant tolerance of the low-rank capacitance system.
inline constexpr double kCapacitanceTolerance = 1e-13;

inline void require_dimension(std::size_t expected, std::size_t got) {
    if (expected != got) throw DimensionMismatch(expected, got);
}

/// Lower-triangular Cholesky factor L with A = L L^T.
class SpdFactor {
public:
    SpdFactor() = default;
    explicit SpdFactor(Matrix lower) : lower_(std::move(lower)) {}

    std::size_t order() const { return static_cast<std::size_t>(lower_.rows()); }
    const Matrix& lower() const { return lower_; }

    Matrix reconstruct() const { return lower_ * lower_.transpose(); }

    Vector solve(const Vector& b) const {
        require_dimension(order(), static_cast<std::size_t>(b.size()));
        Vector y = lower_.triangularView<Eigen::Lower>().solve(b);
        return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    Matrix solve(const Matrix& b) const {
        require_dimension(order(), static_cast<std::size_t>(b.rows()));
        Matrix y = lower_.triangularView<Eigen::Lower>().solve(b);
        return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

private:
    Matrix lower_;
};

inline bool is_exactly_symmetric(const Matrix& a) {
    if (a.rows() != a.cols()) return false;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = j + 1; i < a.rows(); ++i)
            if (a(i, j) != a(j, i)) return false;
    return true;
}

/// Factorizes a symmetric matrix. Pivots at or below 1e-13 x max diagonal
/// raise NotPositiveDefinite.
inline SpdFactor cholesky_factor(const Matrix& a) {
    if (a.rows() == 0 || a.rows() != a.cols())
        throw InvalidArgument("cholesky_factor: matrix must be square and nonempty");
    if (!is_exactly_symmetric(a)) throw AsymmetricHessian("cholesky_factor: matrix is not symmetric");

    const Eigen::Index n = a.rows();
    const double max_diag = a.diagonal().maxCoeff();
    if (!(max_diag > 0.0)) throw NotPositiveDefinite("nonpositive diagonal");
    const double tol = kPivotTolerance * max_diag;

    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("cholesky pivot <= 0");
    Matrix lower = llt.matrixL();
    for (Eigen::Index j = 0; j < n; ++j) {
        const double pivot = lower(j, j) * lower(j, j);
        if (!(pivot > tol) || !std::isfinite(pivot))
            throw NotPositiveDefinite("cholesky pivot " + std::to_string(pivot) +
                                      " below tolerance at column " + std::to_string(j));
    }
    return SpdFactor(std::move(lower));
}

/// Symmetric positive-definite matrix, certified at construction by its own
/// Cholesky factor.
class SpdMatrix {
public:
    explicit SpdMatrix(Matrix entries)
        : entries_(std::move(entries)), factor_(cholesky_factor(entries_)) {}

    static SpdMatrix identity(std::size_t n) {
        return SpdMatrix(Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    }

    std::size_t order() const { return static_cast<std::size_t>(entries_.rows()); }
    const Matrix& entries() const { return entries_; }
    const SpdFactor& factor() const { return factor_; }

    double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

    friend bool operator==(const SpdMatrix& x, const SpdMatrix& y) {
        return x.entries_.rows() == y.entries_.rows() && x.entries_ == y.entries_;
    }

private:
    Matrix entries_;
    SpdFactor factor_;
};

inline SpdFactor cholesky_factor(const SpdMatrix& a) { return a.factor(); }

inline Vector solve_spd(const SpdFactor& f, const Vector& b) { return f.solve(b); }

/// Base solve for A = I.
struct IdentitySolve {
    std::size_t n = 0;
    std::size_t order() const { return n; }
    Vector operator()(const Vector& b) const {
        require_dimension(n, static_cast<std::size_t>(b.size()));
        return b;
    }
};

struct FactorSolve {
    const SpdFactor* factor = nullptr;
    std::size_t order() const { return factor->order(); }
    Vector operator()(const Vector& b) const { return factor->solve(b); }
};

/// Applies (A + U D U^T)^{-1} given a solver for A, through the capacitance
/// system (I + D U^T A^{-1} U). Columns of U are normalized internally so the
/// singularity test does not depend on their scale.
template <class BaseSolve>
class WoodburySolver {
public:
    WoodburySolver(BaseSolve base, const Matrix& u, const Matrix& d) : base_(std::move(base)) {
        const std::size_t n = base_.order();
        require_dimension(n, static_cast<std::size_t>(u.rows()));
        if (d.rows() != u.cols() || d.cols() != u.cols())
            throw DimensionMismatch(static_cast<std::size_t>(u.cols()), static_cast<std::size_t>(d.rows()));

        const Eigen::Index m = u.cols();
        Vector scale(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const double norm = u.col(j).norm();
            scale(j) = norm > 0.0 ? norm : 1.0;
        }
        u_ = u * scale.cwiseInverse().asDiagonal();
        d_ = scale.asDiagonal() * d * scale.asDiagonal();

        a_inv_u_.resize(static_cast<Eigen::Index>(n), m);
        for (Eigen::Index j = 0; j < m; ++j) a_inv_u_.col(j) = base_(u_.col(j));
        if (m == 0) return;

        Matrix cap = Matrix::Identity(m, m) + d_ * (u_.transpose() * a_inv_u_);
        double hadamard = 1.0;
        for (Eigen::Index i = 0; i < m; ++i) hadamard *= cap.row(i).norm();
        lu_ = Eigen::FullPivLU<Matrix>(cap);
        const double det = lu_.determinant();
        if (!(hadamard > 0.0) || !(std::abs(det) > kCapacitanceTolerance * hadamard) || !std::isfinite(det))
            throw SingularCapacitance("capacitance matrix is singular (|det| = " +
                                      std::to_string(std::abs(det)) + ")");
    }

    std::size_t order() const { return base_.order(); }

    Vector operator()(const Vector& b) const { return apply(b); }

    Vector apply(const Vector& b) const {
        Vector x = base_(b);
        if (u_.cols() == 0) return x;
        Vector rhs = d_ * (u_.transpose() * x);
        Vector w = lu_.solve(rhs);
        x.noalias() -= a_inv_u_ * w;
        return x;
    }

private:
    BaseSolve base_;
    Matrix u_;
    Matrix d_;
    Matrix a_inv_u_;
    Eigen::FullPivLU<Matrix> lu_;
};

/// (A + U D U^T)^{-1} b with A given by its factor.
inline Vector woodbury_apply(const SpdFactor& f, const Matrix& u, const Matrix& d, const Vector& b) {
    return WoodburySolver<FactorSolve>(FactorSolve{&f}, u, d).apply(b);
}

/// Relative Frobenius distance ||a - b||_F / ||b||_F (absolute when b = 0).
inline double relative_frobenius(const Matrix& a, const Matrix& b) {
    const double denom = b.norm();
    const double diff = (a - b).norm();
    return denom > 0.0 ? diff / denom : diff;
}

} // namespace nqn
