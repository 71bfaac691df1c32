#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace nqn;

namespace {

NormSeries series(std::string method, std::vector<double> norms, std::string problem = "p", std::size_t rep = 0) {
    return NormSeries{std::move(problem), std::move(method), rep, std::move(norms)};
}

} // namespace

TEST(StepsToTol, Examples) {
    std::vector<double> norms(10, 1.0);
    norms[7] = 1e-7;
    norms[8] = 1e-8;
    EXPECT_EQ(steps_to_tolerance(series("m", norms), 1e-6), std::optional<std::size_t>(7));
    EXPECT_EQ(steps_to_tolerance(series("m", {1.0, 0.5}), 1e-6), std::nullopt);
    EXPECT_EQ(steps_to_tolerance(series("m", {1e-9}), 1e-6), std::optional<std::size_t>(0));
}

TEST(MinNorm, Examples) {
    EXPECT_EQ(min_norm(series("m", {3.0, 2.0, 1.0})), 1.0);
    EXPECT_EQ(min_norm(series("m", {0.25})), 0.25);
    EXPECT_EQ(min_norm(series("m", {1.0, 0.1, 0.5})), 0.1);
    EXPECT_THROW(min_norm(series("m", {})), EmptyResults);
}

TEST(Profile, SingleMethodIsOne) {
    std::vector<CellMetric> cells;
    for (std::size_t r = 0; r < 5; ++r) cells.push_back({"p", r, "only", 3.0 + static_cast<double>(r)});
    const auto prof = performance_profile(cells, ProfileMetric::steps_to_tol);
    ASSERT_EQ(prof.methods.size(), 1u);
    EXPECT_EQ(prof.cells, 5u);
    for (std::size_t tau = 1; tau <= 20; ++tau) EXPECT_EQ(prof.at("only", tau), 1.0);
}

TEST(Profile, TwoMethodArithmetic) {
    const std::vector<CellMetric> cells{{"p", 0, "a", 10.0}, {"p", 0, "b", 25.0}};
    const auto prof = performance_profile(cells, ProfileMetric::steps_to_tol);
    for (std::size_t tau = 1; tau <= 20; ++tau) {
        EXPECT_EQ(prof.at("a", tau), 1.0);
        EXPECT_EQ(prof.at("b", tau), tau <= 2 ? 0.0 : 1.0) << tau;
    }
}

TEST(Profile, MissingMetricNeverCounts) {
    const std::vector<CellMetric> cells{{"p", 0, "a", 4.0}, {"p", 0, "b", std::nullopt},
                                        {"p", 1, "a", 8.0}, {"p", 1, "b", 2.0},
                                        {"p", 2, "a", std::nullopt}, {"p", 2, "b", std::nullopt}};
    const auto prof = performance_profile(cells, ProfileMetric::steps_to_tol);
    EXPECT_EQ(prof.cells, 2u);
    EXPECT_EQ(prof.at("b", 1), 0.5);
    EXPECT_EQ(prof.at("b", 20), 0.5);
    EXPECT_EQ(prof.at("a", 1), 0.5);
    EXPECT_EQ(prof.at("a", 4), 1.0);
    EXPECT_THROW(prof.at("c", 1), InvalidArgument);
    EXPECT_THROW(prof.at("a", 21), InvalidArgument);
}

TEST(Profile, Errors) {
    EXPECT_THROW(performance_profile({}, ProfileMetric::min_norm), EmptyResults);
    EXPECT_THROW(performance_profile({{"p", 0, "a", std::nullopt}}, ProfileMetric::min_norm), EmptyResults);
}

TEST(Profile, MonotoneAndScaleInvariant) {
    Rng rng(5);
    std::vector<CellMetric> cells, scaled;
    for (std::size_t r = 0; r < 40; ++r) {
        const double scale = std::exp(rng.normal());
        for (const char* m : {"x", "y", "z"}) {
            std::optional<double> v;
            if (rng.uniform01() > 0.1) v = 1.0 + 30.0 * rng.uniform01();
            cells.push_back({"p", r, m, v});
            scaled.push_back({"p", r, m, v ? std::optional<double>(*v * scale) : std::nullopt});
        }
    }
    const auto a = performance_profile(cells, ProfileMetric::min_norm);
    const auto b = performance_profile(scaled, ProfileMetric::min_norm);
    for (const auto& m : a.methods)
        for (std::size_t tau = 1; tau <= 20; ++tau) {
            EXPECT_EQ(a.at(m, tau), b.at(m, tau));
            EXPECT_GE(a.at(m, tau), 0.0);
            EXPECT_LE(a.at(m, tau), 1.0);
            if (tau > 1) EXPECT_GE(a.at(m, tau), a.at(m, tau - 1));
        }
}

TEST(CollectMetric, BothKinds) {
    const std::vector<NormSeries> runs{series("a", {1.0, 1e-3, 1e-7}), series("b", {1.0, 0.5})};
    const auto steps = collect_metric(runs, ProfileMetric::steps_to_tol, 1e-6);
    EXPECT_EQ(steps[0].value, std::optional<double>(2.0));
    EXPECT_EQ(steps[1].value, std::nullopt);
    const auto mins = collect_metric(runs, ProfileMetric::min_norm, 1e-6);
    EXPECT_EQ(mins[0].value, std::optional<double>(1e-7));
    EXPECT_EQ(mins[1].value, std::optional<double>(0.5));
}

TEST(AverageLog, Examples) {
    const auto single = average_log_norm({series("m", {1.0, 0.1, 0.01})});
    ASSERT_EQ(single.size(), 3u);
    EXPECT_DOUBLE_EQ(single[2], -2.0);

    const auto two = average_log_norm({series("m", {1e-2}), series("m", {1e-4})});
    EXPECT_DOUBLE_EQ(two[0], -3.0);

    const auto padded = average_log_norm({series("m", {1.0, 1e-2}), series("m", {1.0, 1.0, 1.0, 1.0})});
    ASSERT_EQ(padded.size(), 4u);
    EXPECT_DOUBLE_EQ(padded[1], -1.0);
    EXPECT_DOUBLE_EQ(padded[2], -1.0);
    EXPECT_DOUBLE_EQ(padded[3], -1.0);

    const auto zero = average_log_norm({series("m", {0.0})});
    EXPECT_TRUE(std::isfinite(zero[0]));
    EXPECT_THROW(average_log_norm({}), EmptyResults);
}

TEST(Csv, ProfileAndCurveFormats) {
    const auto prof = performance_profile({{"p", 0, "a", 10.0}, {"p", 0, "b", 25.0}}, ProfileMetric::steps_to_tol);
    std::ostringstream out;
    write_profile_csv(out, prof);
    const std::string csv = out.str();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,tau,fraction");
    EXPECT_NE(csv.find("\nb,2,0\n"), std::string::npos);
    EXPECT_NE(csv.find("\nb,3,1\n"), std::string::npos);

    std::ostringstream curve;
    write_curve_csv(curve, {series("b", {1e-2}), series("a", {1.0, 0.1})});
    EXPECT_EQ(curve.str(), "method,k,mean_log10_norm\na,0,0\na,1,-1\nb,0,-2\n");
}
