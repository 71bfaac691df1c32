#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nqn/ccqn.hpp"
#include "nqn/directions.hpp"
#include "nqn/errors.hpp"
#include "nqn/noise.hpp"
#include "nqn/problem.hpp"
#include "nqn/rng.hpp"
#include "nqn/text.hpp"

namespace nqn {

enum class MethodKind { sd, cg, bfgs, mlbfgs, ccqn, lmccqn };

struct Method {
    MethodKind kind = MethodKind::sd;
    double beta = 0.0;          ///< ccqn / lmccqn
    std::size_t window = 10;    ///< lmccqn only; ccqn always uses K = 0

    static Method sd() { return {MethodKind::sd}; }
    static Method cg() { return {MethodKind::cg}; }
    static Method bfgs() { return {MethodKind::bfgs}; }
    static Method mlbfgs() { return {MethodKind::mlbfgs}; }
    static Method ccqn(double beta) { return {MethodKind::ccqn, beta, 0}; }
    static Method lmccqn(double beta, std::size_t window) { return {MethodKind::lmccqn, beta, window}; }

    std::size_t effective_window() const { return kind == MethodKind::lmccqn ? window : 0; }
    bool is_ccqn() const { return kind == MethodKind::ccqn || kind == MethodKind::lmccqn; }

    std::string name() const {
        switch (kind) {
        case MethodKind::sd: return "sd";
        case MethodKind::cg: return "cg";
        case MethodKind::bfgs: return "bfgs";
        case MethodKind::mlbfgs: return "mlbfgs";
        case MethodKind::ccqn: return "ccqn";
        case MethodKind::lmccqn: return "lmccqn";
        }
        return "?";
    }

    /// Stable identifier used in file names and stream derivation.
    std::string id() const {
        std::string out = name();
        if (is_ccqn()) out += "-b" + text::format_double(beta);
        if (kind == MethodKind::lmccqn) out += "-K" + std::to_string(window);
        return out;
    }

    static Method parse(const std::string& name, double beta = 0.0, std::size_t window = 10) {
        if (name == "sd") return sd();
        if (name == "cg") return cg();
        if (name == "bfgs") return bfgs();
        if (name == "mlbfgs") return mlbfgs();
        if (name == "ccqn") return ccqn(beta);
        if (name == "lmccqn") return lmccqn(beta, window);
        throw InvalidArgument("unknown method '" + name + "'");
    }
};

struct RunConfig {
    double tol = 1e-6;
    std::size_t max_steps = 500;
    double sigma2 = 0.0;
    std::size_t sample_count = 20;
    Method method;
    Vector initial_point;        ///< empty means the zero vector
    double delta_rel = 1e-8;

    void validate() const {
        if (!(tol > 0.0)) throw InvalidArgument("RunConfig: tol must be > 0");
        if (max_steps < 1) throw InvalidArgument("RunConfig: max_steps must be >= 1");
        NoiseSpec{sigma2, sample_count}.validate();
        if (method.is_ccqn()) CcqnParams{method.effective_window(), method.beta, delta_rel}.validate();
    }
};

struct StepFlags {
    bool restart = false;        ///< engine broke down, SD step taken instead
    bool ascent = false;         ///< alpha < 0
    bool update_skipped = false; ///< BFGS kept B_{k-1}
    bool greedy = false;         ///< CCQN exclusion search was not exhaustive
    std::size_t excluded = 0;    ///< CCQN scenarios with z_w = 1

    std::string to_string() const {
        std::string out;
        auto add = [&out](const std::string& token) {
            if (!out.empty()) out += ';';
            out += token;
        };
        if (restart) add("restart");
        if (ascent) add("ascent");
        if (update_skipped) add("skip");
        if (greedy) add("greedy");
        if (excluded > 0) add("excl=" + std::to_string(excluded));
        return out;
    }

    static StepFlags parse(std::string_view text_in) {
        StepFlags f;
        if (text_in.empty()) return f;
        for (auto token : text::split(text_in, ';')) {
            if (token == "restart") f.restart = true;
            else if (token == "ascent") f.ascent = true;
            else if (token == "skip") f.update_skipped = true;
            else if (token == "greedy") f.greedy = true;
            else if (token.rfind("excl=", 0) == 0) f.excluded = std::stoul(std::string(token.substr(5)));
            else throw ParseError("unknown flag '" + std::string(token) + "'");
        }
        return f;
    }
};

struct IterateRecord {
    std::size_t k = 0;
    Vector x;
    double true_norm = 0.0;
    double mean_norm = 0.0;
    Vector direction;   ///< empty on the final record
    double alpha = 0.0;
    double objective = 0.0;
    StepFlags flags;
    // CCQN only, NaN otherwise.
    double gamma = std::numeric_limits<double>::quiet_NaN();
    double rho = std::numeric_limits<double>::quiet_NaN();
    double rho_hat = std::numeric_limits<double>::quiet_NaN();
};

enum class Termination { tolerance, max_steps, breakdown };

inline std::string to_string(Termination t) {
    switch (t) {
    case Termination::tolerance: return "tolerance";
    case Termination::max_steps: return "max_steps";
    case Termination::breakdown: return "breakdown";
    }
    return "?";
}

struct RunTrace {
    RunConfig config;
    std::string problem_label;
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    std::vector<IterateRecord> records;
    Termination termination = Termination::max_steps;
};

/// alpha = -g^T p / (p^T H p) with the true gradient g at x.
inline double exact_step_length(const QuadraticProblem& p, const Vector& true_grad_at_x, const Vector& dir) {
    if (dir.size() == 0 || dir.squaredNorm() == 0.0) throw ZeroDirection();
    const double curvature = dir.dot(p.h() * dir);
    return -true_grad_at_x.dot(dir) / curvature;
}

inline double exact_linesearch(const QuadraticProblem& p, const Vector& x, const Vector& dir) {
    return exact_step_length(p, true_gradient(p, x), dir);
}

/// Runs the outer iteration: sample a batch, build the direction from the
/// batch mean, step with the true-gradient exact linesearch. Stops when the
/// true gradient norm is <= tol or k reaches max_steps.
inline RunTrace run_single(const QuadraticProblem& problem, const RunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t n = problem.dimension();
    RunTrace trace;
    trace.config = cfg;
    trace.problem_label = problem.label();
    trace.seed = seed;

    Rng rng(seed);
    const NoiseSpec noise{cfg.sigma2, cfg.sample_count};
    Vector x = cfg.initial_point.size() == 0 ? Vector::Zero(static_cast<Eigen::Index>(n)) : cfg.initial_point;
    require_dimension(n, static_cast<std::size_t>(x.size()));

    GradientBatch batch = sample_batch(problem, x, noise, rng);
    std::vector<Vector> history;
    LowRankState prev;
    BfgsState bfgs = BfgsState::initial(n);
    const CcqnParams ccqn_params{cfg.method.effective_window(), cfg.method.beta, cfg.delta_rel};

    for (std::size_t k = 0;; ++k) {
        IterateRecord rec;
        rec.k = k;
        rec.x = x;
        rec.true_norm = batch.true_grad.norm();
        rec.mean_norm = batch.mean.norm();
        rec.objective = objective_value(problem, x);

        if (rec.true_norm <= cfg.tol) {
            trace.termination = Termination::tolerance;
            trace.records.push_back(std::move(rec));
            break;
        }
        if (k >= cfg.max_steps) {
            trace.termination = Termination::max_steps;
            trace.records.push_back(std::move(rec));
            break;
        }

        Vector dir;
        if (k == 0 || prev.empty()) {
            dir = sd_direction(batch);
        } else {
            try {
                switch (cfg.method.kind) {
                case MethodKind::sd: dir = sd_direction(batch); break;
                case MethodKind::cg: dir = symcg_direction(prev, batch); break;
                case MethodKind::bfgs:
                    try {
                        bfgs = bfgs_update(bfgs, prev, batch);
                    } catch (const Error&) {
                        rec.flags.update_skipped = true;
                    }
                    dir = bfgs_direction(bfgs, batch);
                    break;
                case MethodKind::mlbfgs: dir = mlbfgs_direction(prev, batch); break;
                case MethodKind::ccqn:
                case MethodKind::lmccqn: {
                    rec.rho_hat = prev.secant_rho();
                    CcqnSolution sol = ccqn_direction(history, prev, batch, ccqn_params);
                    rec.gamma = sol.gamma;
                    rec.rho = sol.rho;
                    rec.flags.excluded = sol.excluded.size();
                    rec.flags.greedy = !sol.exact;
                    dir = std::move(sol.direction);
                    break;
                }
                }
                if (!dir.allFinite()) throw DegenerateDenominator("non-finite direction");
            } catch (const Error&) {
                rec.flags.restart = true;
                rec.flags.excluded = 0;
                rec.flags.greedy = false;
                dir = sd_direction(batch);
            }
        }

        if (dir.squaredNorm() == 0.0) {
            trace.termination = Termination::breakdown;
            trace.records.push_back(std::move(rec));
            break;
        }
        const double alpha = exact_step_length(problem, batch.true_grad, dir);
        rec.alpha = alpha;
        rec.flags.ascent = alpha < 0.0;
        rec.direction = dir;
        trace.records.push_back(std::move(rec));

        x += alpha * dir;
        prev = LowRankState{dir, batch.mean, alpha};
        history.push_back(batch.mean);
        batch = sample_batch(problem, x, noise, rng);
    }
    return trace;
}

struct SuiteConfig {
    std::vector<Method> methods;
    RunConfig base;              ///< method field is overridden per cell
    std::uint64_t master_seed = 0;
    std::size_t replicates = 30;
    std::size_t workers = 0;     ///< 0: NQN_WORKERS from the environment, else 1
};

inline std::size_t resolve_workers(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("NQN_WORKERS")) {
        char* end = nullptr;
        const long value = std::strtol(env, &end, 10);
        if (end != env && value > 0) return static_cast<std::size_t>(value);
    }
    return 1;
}

/// Traces ordered by (problem, method, replicate). Every cell owns a child
/// stream, so the output does not depend on the worker count.
inline std::vector<RunTrace> run_suite(const std::vector<QuadraticProblem>& problems, const SuiteConfig& suite) {
    struct Cell {
        std::size_t problem;
        std::size_t method;
        std::size_t replicate;
    };
    std::vector<Cell> cells;
    for (std::size_t p = 0; p < problems.size(); ++p)
        for (std::size_t m = 0; m < suite.methods.size(); ++m)
            for (std::size_t r = 0; r < suite.replicates; ++r) cells.push_back({p, m, r});

    std::vector<RunTrace> traces(cells.size());
    auto run_cell = [&](std::size_t idx) {
        const Cell& c = cells[idx];
        RunConfig cfg = suite.base;
        cfg.method = suite.methods[c.method];
        const auto& problem = problems[c.problem];
        const std::uint64_t seed = child_seed(suite.master_seed, problem.label(), cfg.method.id(), c.replicate);
        traces[idx] = run_single(problem, cfg, seed);
        traces[idx].replicate = c.replicate;
    };

    const std::size_t workers = std::min(resolve_workers(suite.workers), std::max<std::size_t>(cells.size(), 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
        return traces;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return traces;
}

} // namespace nqn
