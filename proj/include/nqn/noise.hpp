#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "nqn/errors.hpp"
#include "nqn/linalg.hpp"
#include "nqn/problem.hpp"
#include "nqn/rng.hpp"

namespace nqn {

/// Per-component Gaussian noise N(0, sigma2) on S gradient samples.
struct NoiseSpec {
    double sigma2 = 0.0;
    std::size_t sample_count = 1;

    void validate() const {
        if (!(sigma2 >= 0.0)) throw InvalidArgument("NoiseSpec: sigma2 must be >= 0");
        if (sample_count < 1) throw InvalidArgument("NoiseSpec: sample_count must be >= 1");
    }
};

struct GradientBatch {
    std::vector<Vector> samples;
    Vector mean;
    Vector true_grad;

    std::size_t size() const { return samples.size(); }
    std::size_t dimension() const { return static_cast<std::size_t>(mean.size()); }
};

inline Vector sample_mean(const std::vector<Vector>& samples) {
    if (samples.empty()) throw InvalidArgument("sample_mean: no samples");
    Vector sum = Vector::Zero(samples.front().size());
    for (const auto& s : samples) {
        require_dimension(static_cast<std::size_t>(sum.size()), static_cast<std::size_t>(s.size()));
        sum += s;
    }
    return sum / static_cast<double>(samples.size());
}

/// Builds a batch from given samples (used by tests and synthetic instances).
inline GradientBatch make_batch(std::vector<Vector> samples, Vector true_grad) {
    GradientBatch batch;
    batch.mean = sample_mean(samples);
    batch.samples = std::move(samples);
    batch.true_grad = std::move(true_grad);
    return batch;
}

/// Draws S samples Hx + c + eps, eps ~ N(0, sigma2 I), sample by sample,
/// component by component.
inline GradientBatch sample_batch(const QuadraticProblem& p, const Vector& x, const NoiseSpec& spec, Rng& rng) {
    spec.validate();
    GradientBatch batch;
    batch.true_grad = true_gradient(p, x);
    const double sigma = std::sqrt(spec.sigma2);
    const Eigen::Index n = batch.true_grad.size();
    batch.samples.reserve(spec.sample_count);
    for (std::size_t s = 0; s < spec.sample_count; ++s) {
        Vector g = batch.true_grad;
        if (sigma > 0.0)
            for (Eigen::Index i = 0; i < n; ++i) g(i) += sigma * rng.normal();
        batch.samples.push_back(std::move(g));
    }
    batch.mean = sigma > 0.0 ? sample_mean(batch.samples) : batch.true_grad;
    return batch;
}

/// Noise radius (g^T B^{-1} g) / ||B^{-1} g|| below which -B^{-1}(g + eps)
/// stays a descent direction for g.
template <class SolveB>
double descent_margin(const SolveB& solve_b, const Vector& g) {
    if (g.size() == 0 || g.squaredNorm() == 0.0) throw ZeroGradient();
    const Vector w = solve_b(g);
    return g.dot(w) / w.norm();
}

} // namespace nqn
