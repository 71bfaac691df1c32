#include <cmath>

#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace nqn;

namespace {

RunConfig zero_noise(Method m, double tol = 1e-10, std::size_t max_steps = 500) {
    RunConfig cfg;
    cfg.tol = tol;
    cfg.max_steps = max_steps;
    cfg.sigma2 = 0.0;
    cfg.sample_count = 1;
    cfg.method = m;
    return cfg;
}

std::vector<Method> all_methods() {
    return {Method::sd(), Method::cg(), Method::bfgs(), Method::mlbfgs(), Method::ccqn(0.0),
            Method::lmccqn(0.0, 10)};
}

} // namespace

TEST(Linesearch, Examples) {
    const auto p = oracle::worked_problem();
    Vector dir(2);
    dir << 2, 1;
    EXPECT_NEAR(exact_linesearch(p, Vector::Zero(2), dir), 5.0 / 9.0, 1e-15);

    const auto q = gen_random(GenSpec{10, -1.0, 1.0, 0.3, 1});
    Rng rng(2);
    const Vector x = oracle::random_vector(10, rng);
    const Vector g = true_gradient(q, x);
    const Vector newton = -q.hessian().factor().solve(g);
    EXPECT_NEAR(exact_linesearch(q, x, newton), 1.0, 1e-12);
    EXPECT_LT(exact_linesearch(q, x, g), 0.0);
    EXPECT_THROW(exact_linesearch(q, x, Vector::Zero(10)), ZeroDirection);
}

TEST(Linesearch, MinimizesOnTheLine) {
    const auto q = gen_random(GenSpec{6, -1.0, 1.0, 0.3, 4});
    Rng rng(3);
    const Vector x = oracle::random_vector(6, rng), d = oracle::random_vector(6, rng);
    const double a = exact_linesearch(q, x, d);
    const double f = objective_value(q, x + a * d);
    for (double e : {-1e-3, 1e-3}) EXPECT_GE(objective_value(q, x + (a + e) * d), f);
}

TEST(RunSingle, CgSolvesWorkedProblemInTwoSteps) {
    const auto trace = run_single(oracle::worked_problem(), zero_noise(Method::cg()), 0);
    EXPECT_EQ(trace.termination, Termination::tolerance);
    ASSERT_EQ(trace.records.size(), 3u);
    EXPECT_EQ(trace.records.back().k, 2u);
    EXPECT_LE((trace.records.back().x - Vector::Ones(2)).norm(), 1e-10);
    EXPECT_NEAR(trace.records[0].alpha, 5.0 / 9.0, 1e-15);
    EXPECT_EQ(trace.records.back().alpha, 0.0);
    EXPECT_EQ(trace.records.back().direction.size(), 0);
    EXPECT_EQ(steps_to_tolerance(trace, 1e-8), std::optional<std::size_t>(2));
    EXPECT_LE(min_norm(trace), 1e-10);
}

TEST(RunSingle, EveryEngineSolvesWorkedProblem) {
    for (const auto& m : all_methods()) {
        if (m.kind == MethodKind::sd) continue;
        const auto trace = run_single(oracle::worked_problem(), zero_noise(m), 0);
        EXPECT_EQ(trace.termination, Termination::tolerance) << m.id();
        EXPECT_EQ(trace.records.back().k, 2u) << m.id();
    }
}

TEST(RunSingle, MaxStepsTermination) {
    RunConfig cfg;
    cfg.tol = 1e-6;
    cfg.max_steps = 5;
    cfg.sigma2 = 1e-2;
    cfg.method = Method::sd();
    const auto trace = run_single(gen_random(GenSpec{30, -1.0, 1.0, 0.3, 1}), cfg, 9);
    EXPECT_EQ(trace.termination, Termination::max_steps);
    ASSERT_EQ(trace.records.size(), 6u);
    for (std::size_t k = 0; k < trace.records.size(); ++k) EXPECT_EQ(trace.records[k].k, k);
    EXPECT_GT(trace.records.back().true_norm, 1e-6);
}

TEST(RunSingle, MonotoneObjectiveWithoutNoise) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto p = gen_random(GenSpec{15, -1.0, 1.0, 0.3, seed});
        for (const auto& m : all_methods()) {
            const auto trace = run_single(p, zero_noise(m, 1e-9, 60), 0);
            for (std::size_t k = 1; k < trace.records.size(); ++k)
                EXPECT_LE(trace.records[k].objective,
                          trace.records[k - 1].objective + 1e-12 * std::abs(trace.records[k - 1].objective))
                    << m.id() << " k " << k;
        }
    }
}

TEST(RunSingle, MonotoneObjectiveWithNoise) {
    // The true-gradient linesearch never increases q, whatever the direction.
    const auto p = gen_random(GenSpec{20, -1.0, 1.0, 0.3, 5});
    for (const auto& m : all_methods()) {
        RunConfig cfg = zero_noise(m, 1e-8, 80);
        cfg.sigma2 = 1e-2;
        cfg.sample_count = 5;
        const auto trace = run_single(p, cfg, 17);
        for (std::size_t k = 1; k < trace.records.size(); ++k)
            EXPECT_LE(trace.records[k].objective,
                      trace.records[k - 1].objective + 1e-12 * std::abs(trace.records[k - 1].objective));
        for (const auto& rec : trace.records) EXPECT_TRUE(std::isfinite(rec.alpha));
    }
}

TEST(RunSingle, Deterministic) {
    const auto p = gen_random(GenSpec{20, -1.0, 1.0, 0.3, 5});
    for (const auto& m : all_methods()) {
        RunConfig cfg = zero_noise(m, 1e-8, 40);
        cfg.sigma2 = 1e-2;
        cfg.sample_count = 4;
        const auto a = run_single(p, cfg, 123), b = run_single(p, cfg, 123);
        ASSERT_EQ(a.records.size(), b.records.size());
        for (std::size_t k = 0; k < a.records.size(); ++k) {
            EXPECT_EQ(a.records[k].x, b.records[k].x);
            EXPECT_EQ(a.records[k].alpha, b.records[k].alpha);
        }
    }
}

TEST(RunSingle, CcqnRecordsRho) {
    RunConfig cfg = zero_noise(Method::lmccqn(0.05, 10), 1e-8, 30);
    cfg.sigma2 = 1e-2;
    cfg.sample_count = 20;
    const auto trace = run_single(gen_random(GenSpec{10, -1.0, 1.0, 0.3, 2}), cfg, 4);
    EXPECT_TRUE(std::isnan(trace.records[0].gamma));
    std::size_t with_gamma = 0;
    for (std::size_t k = 1; k + 1 < trace.records.size(); ++k) {
        const auto& r = trace.records[k];
        if (r.flags.restart) continue;
        ++with_gamma;
        EXPECT_TRUE(std::isfinite(r.gamma));
        EXPECT_GT(r.rho_hat, 0.0);
        EXPECT_LE(r.flags.excluded, 1u);
    }
    EXPECT_GT(with_gamma, 0u);
}

TEST(RunSingle, InitialPointAndValidation) {
    RunConfig cfg = zero_noise(Method::cg());
    cfg.initial_point = Vector::Ones(2);
    const auto trace = run_single(oracle::worked_problem(), cfg, 0);
    EXPECT_EQ(trace.records[0].x, Vector(Vector::Ones(2)));
    EXPECT_EQ(trace.termination, Termination::tolerance);
    EXPECT_EQ(trace.records.size(), 1u);

    cfg.initial_point = Vector::Ones(3);
    EXPECT_THROW(run_single(oracle::worked_problem(), cfg, 0), DimensionMismatch);
    RunConfig bad = zero_noise(Method::cg());
    bad.tol = 0.0;
    EXPECT_THROW(run_single(oracle::worked_problem(), bad, 0), InvalidArgument);
    bad = zero_noise(Method::ccqn(1.0));
    EXPECT_THROW(run_single(oracle::worked_problem(), bad, 0), InvalidArgument);
}

TEST(Flags, RoundTrip) {
    StepFlags f;
    EXPECT_EQ(f.to_string(), "");
    f.restart = true;
    f.ascent = true;
    f.update_skipped = true;
    f.greedy = true;
    f.excluded = 2;
    EXPECT_EQ(f.to_string(), "restart;ascent;skip;greedy;excl=2");
    const auto g = StepFlags::parse(f.to_string());
    EXPECT_EQ(g.to_string(), f.to_string());
    EXPECT_THROW(StepFlags::parse("bogus"), ParseError);
}

TEST(MethodId, Naming) {
    EXPECT_EQ(Method::ccqn(0.0).id(), "ccqn-b0");
    EXPECT_EQ(Method::lmccqn(0.05, 10).id(), "lmccqn-b0.05-K10");
    EXPECT_EQ(Method::parse("mlbfgs").id(), "mlbfgs");
    EXPECT_EQ(Method::parse("ccqn", 0.05, 7).effective_window(), 0u);
    EXPECT_EQ(Method::parse("lmccqn", 0.0, 7).effective_window(), 7u);
    EXPECT_THROW(Method::parse("newton"), InvalidArgument);
}

TEST(Suite, CellCountAndOrder) {
    SuiteConfig suite;
    suite.methods = {Method::sd(), Method::cg()};
    suite.base.sigma2 = 1e-2;
    suite.base.max_steps = 10;
    suite.base.sample_count = 3;
    suite.replicates = 3;
    suite.master_seed = 1;
    const std::vector<QuadraticProblem> problems{gen_random(GenSpec{5, -1.0, 1.0, 0.3, 1})};
    const auto traces = run_suite(problems, suite);
    ASSERT_EQ(traces.size(), 6u);
    EXPECT_EQ(traces[0].config.method.id(), "sd");
    EXPECT_EQ(traces[3].config.method.id(), "cg");
    EXPECT_EQ(traces[4].replicate, 1u);
    EXPECT_EQ(traces[4].seed, child_seed(1, problems[0].label(), "cg", 1));

    suite.methods.clear();
    EXPECT_TRUE(run_suite(problems, suite).empty());
}

TEST(Suite, SerialEqualsParallel) {
    SuiteConfig suite;
    suite.methods = {Method::bfgs(), Method::mlbfgs(), Method::ccqn(0.05)};
    suite.base.sigma2 = 1e-2;
    suite.base.max_steps = 25;
    suite.base.sample_count = 8;
    suite.replicates = 4;
    suite.master_seed = 77;
    const std::vector<QuadraticProblem> problems{gen_random(GenSpec{8, -1.0, 1.0, 0.3, 1}),
                                                 gen_random(GenSpec{8, -1.0, 1.0, 0.3, 2})};
    suite.workers = 1;
    const auto serial = run_suite(problems, suite);
    suite.workers = 4;
    const auto parallel = run_suite(problems, suite);
    ASSERT_EQ(serial.size(), parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        ASSERT_EQ(serial[i].records.size(), parallel[i].records.size());
        for (std::size_t k = 0; k < serial[i].records.size(); ++k)
            EXPECT_EQ(serial[i].records[k].x, parallel[i].records[k].x);
    }
}

TEST(Suite, WorkersFromEnvironment) {
    EXPECT_EQ(resolve_workers(3), 3u);
    ::setenv("NQN_WORKERS", "5", 1);
    EXPECT_EQ(resolve_workers(0), 5u);
    ::setenv("NQN_WORKERS", "junk", 1);
    EXPECT_EQ(resolve_workers(0), 1u);
    ::unsetenv("NQN_WORKERS");
    EXPECT_EQ(resolve_workers(0), 1u);
}
