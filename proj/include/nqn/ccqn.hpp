#pragma once

// Chance-constrained direction subproblem in the memoryless BFGS family.
//
// For scenario w with sampled gradient g_w, y_w = g_w - g_{k-1} and
// B_w = V_k + rho_hat y_w y_w^T, the candidate direction is affine in gamma:
//
//   p_w(gamma) = u_w + gamma v_w,
//   u_w = -B_w^{-1} g_w,   v_w = -(y_w^T B_w^{-1} g_w) B_w^{-1} y_w,
//
// and is admissible for gamma >= l_w = -1/(y_w^T B_w^{-1} y_w) + delta.
// With the window deltas d_i (i in I_K) and the scenario delta y_w as last
// term, the sample problem is
//
//   minimize  F(gamma) = sum_i max_{w active} (a_iw + gamma b_iw)^2
//   over      gamma >= max_{w active} l_w,
//
// a_iw = d_i^T u_w, b_iw = d_i^T v_w. Each max of |affine| pieces is the
// upper envelope of the lines +-(a + gamma b), so F is convex and piecewise
// quadratic. It is minimized exactly by scanning the merged envelope
// breakpoints. Excluded scenarios drop their constraints; the exclusion set
// is enumerated for the chance-constrained variant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "nqn/directions.hpp"
#include "nqn/errors.hpp"
#include "nqn/linalg.hpp"
#include "nqn/noise.hpp"

namespace nqn {

struct CcqnParams {
    std::size_t window = 0;    ///< K; the window is I_K = {max(0, k-K), ..., k-2}
    double beta = 0.0;         ///< exclusion level in [0, 1)
    double delta_rel = 1e-8;   ///< strict-bound margin delta = delta_rel (1 + 1/q)
    double enumeration_cap = 1e6;

    void validate() const {
        if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("ccqn: beta must be in [0, 1)");
        if (!(delta_rel > 0.0)) throw InvalidArgument("ccqn: delta_rel must be > 0");
    }
};

/// floor(S beta), robust to beta values such as 0.05 that are inexact in binary.
inline std::size_t exclusion_limit(std::size_t sample_count, double beta) {
    const double raw = static_cast<double>(sample_count) * beta;
    return static_cast<std::size_t>(std::floor(raw * (1.0 + 1e-12)));
}

struct CcqnScenario {
    std::size_t omega = 0;    ///< index in the gradient batch
    Vector grad;
    Vector delta;             ///< y_w
    Vector u;
    Vector v;
    double curvature = 0.0;   ///< q_w = y_w^T B_w^{-1} y_w
    double lower = 0.0;       ///< l_w
    std::vector<double> a;    ///< one entry per term, window terms first
    std::vector<double> b;
};

struct CcqnInstance {
    std::size_t k = 0;
    std::vector<std::size_t> window;
    std::vector<Vector> deltas;
    std::vector<CcqnScenario> scenarios;
    std::vector<std::size_t> broken;   ///< scenarios that failed positivity, always excluded
    std::size_t sample_count = 0;
    double beta = 0.0;
    double delta_rel = 1e-8;
    double rho_hat = 0.0;

    std::size_t terms() const { return window.size() + 1; }
    std::size_t exclusion_budget() const { return exclusion_limit(sample_count, beta); }
};

/// Builds the sample problem at step k = history.size() from the past mean
/// gradients g_0..g_{k-1}, the previous step and the current batch.
inline CcqnInstance build_instance(const std::vector<Vector>& history, const LowRankState& prev,
                                   const GradientBatch& batch, const CcqnParams& params) {
    params.validate();
    if (history.empty() || prev.empty()) throw InvalidArgument("build_instance: requires k >= 1");
    if (batch.size() < 1) throw InvalidArgument("build_instance: empty batch");

    CcqnInstance inst;
    inst.k = history.size();
    inst.sample_count = batch.size();
    inst.beta = params.beta;
    inst.delta_rel = params.delta_rel;

    const std::size_t k = inst.k;
    const std::size_t start = k > params.window ? k - params.window : 0;
    for (std::size_t i = start; i + 2 <= k; ++i) {
        inst.window.push_back(i);
        inst.deltas.push_back(history[i + 1] - history[i]);
    }

    inst.rho_hat = prev.secant_rho();
    const Vector& g_prev = prev.prev_mean_grad;

    for (std::size_t w = 0; w < batch.size(); ++w) {
        CcqnScenario sc;
        sc.omega = w;
        sc.grad = batch.samples[w];
        sc.delta = sc.grad - g_prev;
        try {
            const MemorylessMatrix bw(prev.prev_direction, sc.delta, inst.rho_hat);
            const Vector z = bw.solve(sc.grad);
            const Vector wy = bw.solve(sc.delta);
            sc.curvature = sc.delta.dot(wy);
            if (!(sc.curvature > 0.0) || !std::isfinite(sc.curvature))
                throw DegenerateDenominator("scenario curvature is not positive");
            const double s = sc.delta.dot(z);
            sc.u = -z;
            sc.v = -s * wy;
            const double bare = -1.0 / sc.curvature;
            sc.lower = bare + params.delta_rel * (1.0 + std::abs(bare));
        } catch (const Error&) {
            inst.broken.push_back(w);
            continue;
        }
        sc.a.reserve(inst.terms());
        sc.b.reserve(inst.terms());
        for (const auto& d : inst.deltas) {
            sc.a.push_back(d.dot(sc.u));
            sc.b.push_back(d.dot(sc.v));
        }
        sc.a.push_back(sc.delta.dot(sc.u));
        sc.b.push_back(sc.delta.dot(sc.v));
        inst.scenarios.push_back(std::move(sc));
    }
    if (inst.broken.size() > inst.exclusion_budget())
        throw ScenarioBreakdown(inst.broken.size(), inst.exclusion_budget());
    return inst;
}

/// Instance given directly by its coefficient table (a[w][i], b[w][i], l_w).
inline CcqnInstance make_coefficient_instance(const std::vector<std::vector<double>>& a,
                                              const std::vector<std::vector<double>>& b,
                                              const std::vector<double>& lower, double beta = 0.0) {
    if (a.empty() || a.size() != b.size() || a.size() != lower.size())
        throw InvalidArgument("make_coefficient_instance: inconsistent sizes");
    CcqnInstance inst;
    const std::size_t terms = a.front().size();
    if (terms == 0) throw InvalidArgument("make_coefficient_instance: no terms");
    for (std::size_t i = 0; i + 1 < terms; ++i) inst.window.push_back(i);
    inst.k = terms;
    inst.sample_count = a.size();
    inst.beta = beta;
    for (std::size_t w = 0; w < a.size(); ++w) {
        if (a[w].size() != terms || b[w].size() != terms)
            throw InvalidArgument("make_coefficient_instance: ragged table");
        CcqnScenario sc;
        sc.omega = w;
        sc.a = a[w];
        sc.b = b[w];
        sc.lower = lower[w];
        inst.scenarios.push_back(std::move(sc));
    }
    return inst;
}

/// Line y = slope * gamma + intercept.
struct EnvelopeLine {
    double slope = 0.0;
    double intercept = 0.0;
    double operator()(double x) const { return slope * x + intercept; }
};

/// Upper envelope of a set of lines, restricted to [lower, inf). Line j is
/// active on [breaks[j-1], breaks[j]] with breaks[-1] = lower.
struct Envelope {
    std::vector<EnvelopeLine> lines;
    std::vector<double> breaks;   ///< size lines.size() - 1, strictly increasing, > lower
};

inline Envelope upper_envelope(std::vector<EnvelopeLine> lines, double lower) {
    std::sort(lines.begin(), lines.end(), [](const EnvelopeLine& x, const EnvelopeLine& y) {
        return x.slope < y.slope || (x.slope == y.slope && x.intercept < y.intercept);
    });
    std::vector<EnvelopeLine> distinct;
    for (const auto& l : lines) {
        if (!distinct.empty() && distinct.back().slope == l.slope) distinct.back() = l;
        else distinct.push_back(l);
    }
    auto cross = [](const EnvelopeLine& l1, const EnvelopeLine& l2) {
        return (l1.intercept - l2.intercept) / (l2.slope - l1.slope);
    };
    std::vector<EnvelopeLine> hull;
    for (const auto& l : distinct) {
        while (hull.size() >= 2) {
            const auto& l1 = hull[hull.size() - 2];
            const auto& l2 = hull.back();
            if (cross(l1, l) <= cross(l1, l2)) hull.pop_back();
            else break;
        }
        hull.push_back(l);
    }
    std::vector<double> breaks;
    for (std::size_t j = 0; j + 1 < hull.size(); ++j) breaks.push_back(cross(hull[j], hull[j + 1]));

    // Drop the segments that end at or before the lower bound.
    std::size_t first = 0;
    while (first < breaks.size() && breaks[first] <= lower) ++first;
    Envelope env;
    env.lines.assign(hull.begin() + static_cast<std::ptrdiff_t>(first), hull.end());
    env.breaks.assign(breaks.begin() + static_cast<std::ptrdiff_t>(first), breaks.end());
    return env;
}

struct CurvePiece {
    double lo = 0.0;
    double hi = 0.0;   ///< +inf for the last piece
    double c2 = 0.0;
    double c1 = 0.0;
    double c0 = 0.0;
    double operator()(double x) const { return (c2 * x + c1) * x + c0; }
};

/// Convex piecewise-quadratic objective F on [lower, inf).
struct PiecewiseQuadratic {
    double lower = 0.0;
    std::vector<double> breakpoints;
    std::vector<CurvePiece> pieces;
    std::vector<Envelope> envelopes;   ///< one per term

    /// Term values t_i(gamma) = max over active lines.
    std::vector<double> term_values(double x) const {
        std::vector<double> t;
        t.reserve(envelopes.size());
        for (const auto& env : envelopes) {
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& l : env.lines) best = std::max(best, l(x));
            t.push_back(best);
        }
        return t;
    }

    double operator()(double x) const {
        double sum = 0.0;
        for (double t : term_values(x)) sum += t * t;
        return sum;
    }
};

/// `active` holds positions in inst.scenarios; must be nonempty.
inline PiecewiseQuadratic objective_curve(const CcqnInstance& inst, const std::vector<std::size_t>& active) {
    if (active.empty()) throw InvalidArgument("objective_curve: no active scenarios");
    PiecewiseQuadratic curve;
    curve.lower = -std::numeric_limits<double>::infinity();
    for (std::size_t idx : active) curve.lower = std::max(curve.lower, inst.scenarios.at(idx).lower);

    const std::size_t terms = inst.terms();
    curve.envelopes.reserve(terms);
    for (std::size_t i = 0; i < terms; ++i) {
        std::vector<EnvelopeLine> lines;
        lines.reserve(2 * active.size());
        for (std::size_t idx : active) {
            const auto& sc = inst.scenarios[idx];
            lines.push_back({sc.b[i], sc.a[i]});
            lines.push_back({-sc.b[i], -sc.a[i]});
        }
        curve.envelopes.push_back(upper_envelope(std::move(lines), curve.lower));
        for (double x : curve.envelopes.back().breaks) curve.breakpoints.push_back(x);
    }
    std::sort(curve.breakpoints.begin(), curve.breakpoints.end());
    curve.breakpoints.erase(std::unique(curve.breakpoints.begin(), curve.breakpoints.end()),
                            curve.breakpoints.end());

    std::vector<std::size_t> cursor(terms, 0);
    double lo = curve.lower;
    for (std::size_t j = 0; j <= curve.breakpoints.size(); ++j) {
        const double hi = j < curve.breakpoints.size() ? curve.breakpoints[j]
                                                       : std::numeric_limits<double>::infinity();
        CurvePiece piece{lo, hi, 0.0, 0.0, 0.0};
        for (std::size_t i = 0; i < terms; ++i) {
            const auto& env = curve.envelopes[i];
            while (cursor[i] < env.breaks.size() && env.breaks[cursor[i]] <= lo) ++cursor[i];
            const auto& l = env.lines[cursor[i]];
            piece.c2 += l.slope * l.slope;
            piece.c1 += 2.0 * l.slope * l.intercept;
            piece.c0 += l.intercept * l.intercept;
        }
        curve.pieces.push_back(piece);
        lo = hi;
    }
    return curve;
}

struct CurveMinimum {
    double gamma = 0.0;
    double value = 0.0;
};

/// Scans every piece, clamps each piece's vertex to the piece and keeps the
/// best. Ties go to the smallest gamma.
inline CurveMinimum minimize_curve(const PiecewiseQuadratic& curve) {
    CurveMinimum best{curve.lower, curve(curve.lower)};
    for (const auto& piece : curve.pieces) {
        double x = piece.lo;
        if (piece.c2 > 0.0) x = std::clamp(-piece.c1 / (2.0 * piece.c2), piece.lo, piece.hi);
        const double value = curve(x);
        if (value < best.value * (1.0 - 1e-13)) best = {x, value};
    }
    return best;
}

struct CcqnSolution {
    double gamma = 0.0;
    double lower = 0.0;
    double objective = 0.0;
    std::vector<double> t_values;
    std::vector<std::size_t> excluded;   ///< batch indices with z_w = 1 (including broken)
    bool exact = true;
    // Filled by ccqn_direction.
    double rho = 0.0;          ///< gamma / (1 + gamma q_mean)
    double rho_offset = 0.0;   ///< -gamma / (1 + gamma q_mean), added to rho_hat
    Vector direction;
};

namespace detail {

inline CcqnSolution solve_active(const CcqnInstance& inst, const std::vector<std::size_t>& active) {
    const auto curve = objective_curve(inst, active);
    const auto best = minimize_curve(curve);
    CcqnSolution sol;
    sol.gamma = best.gamma;
    sol.lower = curve.lower;
    sol.objective = best.value;
    sol.t_values = curve.term_values(best.gamma);
    return sol;
}

inline std::vector<std::size_t> complement(std::size_t count, const std::vector<std::size_t>& dropped) {
    std::vector<bool> out(count, false);
    for (std::size_t d : dropped) out[d] = true;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < count; ++i)
        if (!out[i]) active.push_back(i);
    return active;
}

inline void finish_exclusions(const CcqnInstance& inst, const std::vector<std::size_t>& dropped, CcqnSolution& sol) {
    sol.excluded = inst.broken;
    for (std::size_t d : dropped) sol.excluded.push_back(inst.scenarios[d].omega);
    std::sort(sol.excluded.begin(), sol.excluded.end());
}

inline double binomial(std::size_t n, std::size_t r) {
    double c = 1.0;
    for (std::size_t i = 1; i <= r; ++i) c = c * static_cast<double>(n - r + i) / static_cast<double>(i);
    return c;
}

inline bool better(const CcqnSolution& cand, const CcqnSolution& best) {
    return cand.objective < best.objective * (1.0 - 1e-13);
}

} // namespace detail

/// All certified scenarios active (beta = 0).
inline CcqnSolution solve_scenario(const CcqnInstance& inst) {
    if (inst.scenarios.empty()) throw ScenarioBreakdown(inst.broken.size(), 0);
    std::vector<std::size_t> active(inst.scenarios.size());
    std::iota(active.begin(), active.end(), std::size_t{0});
    auto sol = detail::solve_active(inst, active);
    detail::finish_exclusions(inst, {}, sol);
    return sol;
}

/// Best exclusion set of size <= floor(S beta). Exhaustive while
/// C(P, budget) <= cap, otherwise greedy removal (flagged exact = false).
inline CcqnSolution solve_chance(const CcqnInstance& inst, double beta, double enumeration_cap = 1e6) {
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("solve_chance: beta must be in [0, 1)");
    const std::size_t limit = exclusion_limit(inst.sample_count, beta);
    if (inst.broken.size() > limit) throw ScenarioBreakdown(inst.broken.size(), limit);
    const std::size_t pool = inst.scenarios.size();
    if (pool == 0) throw ScenarioBreakdown(inst.broken.size(), limit);
    const std::size_t budget = std::min(limit - inst.broken.size(), pool - 1);
    if (budget == 0) return solve_scenario(inst);

    CcqnSolution best = solve_scenario(inst);
    std::vector<std::size_t> best_drop;

    if (detail::binomial(pool, budget) <= enumeration_cap) {
        for (std::size_t size = 1; size <= budget; ++size) {
            std::vector<std::size_t> combo(size);
            std::iota(combo.begin(), combo.end(), std::size_t{0});
            while (true) {
                auto cand = detail::solve_active(inst, detail::complement(pool, combo));
                if (detail::better(cand, best)) {
                    best = std::move(cand);
                    best_drop = combo;
                }
                // Next combination in lexicographic order.
                std::size_t pos = size;
                while (pos > 0 && combo[pos - 1] == pool - size + pos - 1) --pos;
                if (pos == 0) break;
                ++combo[pos - 1];
                for (std::size_t j = pos; j < size; ++j) combo[j] = combo[j - 1] + 1;
            }
        }
        detail::finish_exclusions(inst, best_drop, best);
        best.exact = true;
        return best;
    }

    std::vector<std::size_t> dropped;
    for (std::size_t step = 0; step < budget; ++step) {
        bool improved = false;
        CcqnSolution round_best = best;
        std::size_t pick = 0;
        for (std::size_t cand_idx = 0; cand_idx < pool; ++cand_idx) {
            if (std::find(dropped.begin(), dropped.end(), cand_idx) != dropped.end()) continue;
            auto trial = dropped;
            trial.push_back(cand_idx);
            auto cand = detail::solve_active(inst, detail::complement(pool, trial));
            if (detail::better(cand, round_best)) {
                round_best = std::move(cand);
                pick = cand_idx;
                improved = true;
            }
        }
        if (!improved) break;
        dropped.push_back(pick);
        best = std::move(round_best);
        best_drop = dropped;
    }
    detail::finish_exclusions(inst, best_drop, best);
    best.exact = false;
    return best;
}

/// rho = gamma / (1 + gamma q), the recovery used after the sample problem.
inline double gamma_to_rho(double gamma, double curvature) {
    const double den = 1.0 + gamma * curvature;
    if (is_degenerate(den, 1.0 + std::abs(gamma * curvature)))
        throw DegenerateDenominator("gamma_to_rho: 1 + gamma q vanishes");
    return gamma / den;
}

/// Same recovery with q = y^T B^{-1} y computed from the mean-gradient matrix.
template <class SolveB>
double gamma_to_rho(double gamma, const Vector& mean_delta, const SolveB& mean_solve) {
    return gamma_to_rho(gamma, mean_delta.dot(mean_solve(mean_delta)));
}

/// rho - rho_hat = -gamma / (1 + gamma q).
inline double rho_offset_from_gamma(double gamma, double curvature) { return -gamma_to_rho(gamma, curvature); }

/// gamma = -(rho - rho_hat) / (1 + (rho - rho_hat) q).
inline double gamma_from_rho_offset(double offset, double curvature) {
    const double den = 1.0 + offset * curvature;
    if (is_degenerate(den, 1.0 + std::abs(offset * curvature)))
        throw DegenerateDenominator("gamma_from_rho_offset: 1 + offset q vanishes");
    return -offset / den;
}

struct RecoveredDirection {
    Vector direction;
    double curvature = 0.0;   ///< q_mean = ybar^T Bbar^{-1} ybar
};

/// p = -Bbar^{-1} gbar - gamma (ybar^T Bbar^{-1} gbar) Bbar^{-1} ybar with
/// Bbar the memoryless matrix of the mean gradient.
inline RecoveredDirection recover_direction(double gamma, const GradientBatch& batch, const LowRankState& prev) {
    const MemorylessMatrix bbar = memoryless_matrix(prev, batch.mean);
    const Vector ybar = batch.mean - prev.prev_mean_grad;
    const Vector z = bbar.solve(batch.mean);
    const Vector w = bbar.solve(ybar);
    RecoveredDirection out;
    out.curvature = ybar.dot(w);
    out.direction = -z - (gamma * ybar.dot(z)) * w;
    return out;
}

/// Build, solve and recover in one call.
inline CcqnSolution ccqn_direction(const std::vector<Vector>& history, const LowRankState& prev,
                                   const GradientBatch& batch, const CcqnParams& params) {
    const CcqnInstance inst = build_instance(history, prev, batch, params);
    CcqnSolution sol = params.beta > 0.0 ? solve_chance(inst, params.beta, params.enumeration_cap)
                                         : solve_scenario(inst);
    const auto rec = recover_direction(sol.gamma, batch, prev);
    sol.direction = rec.direction;
    sol.rho = gamma_to_rho(sol.gamma, rec.curvature);
    sol.rho_offset = -sol.rho;
    return sol;
}

} // namespace nqn
