#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "nqn/errors.hpp"
#include "nqn/linalg.hpp"
#include "nqn/rng.hpp"
#include "nqn/text.hpp"

namespace nqn {

/// q(x) = 1/2 x^T H x + c^T x + d with H symmetric positive definite.
class QuadraticProblem {
public:
    QuadraticProblem(SpdMatrix hessian, Vector linear, double constant, std::string label)
        : hessian_(std::move(hessian)), linear_(std::move(linear)), constant_(constant),
          label_(std::move(label)) {
        require_dimension(hessian_.order(), static_cast<std::size_t>(linear_.size()));
    }

    std::size_t dimension() const { return hessian_.order(); }
    const SpdMatrix& hessian() const { return hessian_; }
    const Matrix& h() const { return hessian_.entries(); }
    const Vector& linear() const { return linear_; }
    double constant() const { return constant_; }
    const std::string& label() const { return label_; }

    friend bool operator==(const QuadraticProblem& a, const QuadraticProblem& b) {
        return a.hessian_ == b.hessian_ && a.linear_.size() == b.linear_.size() &&
               a.linear_ == b.linear_ && a.constant_ == b.constant_ && a.label_ == b.label_;
    }

private:
    SpdMatrix hessian_;
    Vector linear_;
    double constant_;
    std::string label_;
};

/// Random problem H = Q^T Q + eps diag(u), Q = a J + (b - a) U, c = u.
struct GenSpec {
    std::size_t n = 100;
    double a = -1.0;
    double b = 1.0;
    double eps = 0.3;
    std::uint64_t seed = 0;

    void validate() const {
        if (n < 1) throw InvalidArgument("GenSpec: n must be >= 1");
        if (!(eps > 0.0)) throw InvalidArgument("GenSpec: eps must be > 0");
    }
};

inline std::string default_label(const GenSpec& spec) {
    return "rand_n" + std::to_string(spec.n) + "_s" + std::to_string(spec.seed);
}

/// Uniforms are drawn in the order Q (row-major), diagonal, c.
inline QuadraticProblem gen_random(const GenSpec& spec, std::string label = {}) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.n);
    Rng rng(spec.seed);

    Matrix q(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) q(i, j) = spec.a + (spec.b - spec.a) * rng.uniform01();
    Vector diag(n);
    for (Eigen::Index i = 0; i < n; ++i) diag(i) = rng.uniform01();
    Vector c(n);
    for (Eigen::Index i = 0; i < n; ++i) c(i) = rng.uniform01();

    Matrix h(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            double sum = 0.0;
            for (Eigen::Index r = 0; r < n; ++r) sum += q(r, i) * q(r, j);
            h(i, j) = sum;
            h(j, i) = sum;
        }
        h(j, j) += spec.eps * diag(j);
    }
    if (label.empty()) label = default_label(spec);
    return QuadraticProblem(SpdMatrix(std::move(h)), std::move(c), 0.0, std::move(label));
}

inline Vector true_gradient(const QuadraticProblem& p, const Vector& x) {
    require_dimension(p.dimension(), static_cast<std::size_t>(x.size()));
    return p.h() * x + p.linear();
}

inline double objective_value(const QuadraticProblem& p, const Vector& x) {
    require_dimension(p.dimension(), static_cast<std::size_t>(x.size()));
    return 0.5 * x.dot(p.h() * x) + p.linear().dot(x) + p.constant();
}

/// Solves H x = -c with one step of iterative refinement.
inline Vector exact_minimizer(const QuadraticProblem& p) {
    const SpdFactor& f = p.hessian().factor();
    Vector x = f.solve(Vector(-p.linear()));
    Vector r = p.h() * x + p.linear();
    x -= f.solve(r);
    return x;
}

// Problem file:
//   n=<int>
//   n lines of n numbers (H, row-major)
//   one line of n numbers (c)
//   d=<number>
//   label=<text>

inline void write_problem(std::ostream& out, const QuadraticProblem& p) {
    const auto n = static_cast<Eigen::Index>(p.dimension());
    out << "n=" << n << '\n';
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j) out << ' ';
            out << text::format_double(p.h()(i, j));
        }
        out << '\n';
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i) out << ' ';
        out << text::format_double(p.linear()(i));
    }
    out << '\n';
    out << "d=" << text::format_double(p.constant()) << '\n';
    out << "label=" << p.label() << '\n';
}

namespace detail {

inline std::string expect_key(std::istream& in, std::string_view key, int line_no) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("line " + std::to_string(line_no) + ": missing '" + std::string(key) + "='");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string prefix = std::string(key) + "=";
    if (line.rfind(prefix, 0) != 0)
        throw ParseError("line " + std::to_string(line_no) + ": expected '" + prefix + "'");
    return line.substr(prefix.size());
}

inline Vector read_row(std::istream& in, Eigen::Index n, int line_no) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("line " + std::to_string(line_no) + ": unexpected end of file");
    auto tokens = text::split_ws(line);
    if (static_cast<Eigen::Index>(tokens.size()) != n)
        throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(n) +
                         " numbers, got " + std::to_string(tokens.size()));
    Vector row(n);
    for (Eigen::Index j = 0; j < n; ++j) row(j) = text::parse_double(tokens[static_cast<std::size_t>(j)]);
    return row;
}

} // namespace detail

/// Rejects asymmetric (AsymmetricHessian) and non-SPD (NotPositiveDefinite) input.
inline QuadraticProblem read_problem(std::istream& in) {
    int line_no = 1;
    const std::string n_text = detail::expect_key(in, "n", line_no++);
    long long n_value = 0;
    try {
        std::size_t used = 0;
        n_value = std::stoll(n_text, &used);
        if (used != n_text.size()) throw ParseError("bad n");
    } catch (const std::exception&) {
        throw ParseError("line 1: invalid dimension '" + n_text + "'");
    }
    if (n_value < 1) throw ParseError("line 1: dimension must be >= 1");
    const auto n = static_cast<Eigen::Index>(n_value);

    Matrix h(n, n);
    for (Eigen::Index i = 0; i < n; ++i) h.row(i) = detail::read_row(in, n, line_no++).transpose();
    Vector c = detail::read_row(in, n, line_no++);
    const double d = text::parse_double(detail::expect_key(in, "d", line_no++));
    std::string label = detail::expect_key(in, "label", line_no++);

    if (!is_exactly_symmetric(h)) throw AsymmetricHessian("problem file: Hessian is not symmetric");
    return QuadraticProblem(SpdMatrix(std::move(h)), std::move(c), d, std::move(label));
}

inline void store_problem(const QuadraticProblem& p, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    write_problem(out, p);
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline QuadraticProblem load_problem(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return read_problem(in);
}

} // namespace nqn
