#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "nqn/errors.hpp"
#include "nqn/harness.hpp"
#include "nqn/text.hpp"

namespace nqn {

/// True gradient norms of one run, keyed by the cell it belongs to.
struct NormSeries {
    std::string problem;
    std::string method;
    std::size_t replicate = 0;
    std::vector<double> true_norms;   ///< indexed by k
};

inline NormSeries to_series(const RunTrace& trace) {
    NormSeries s;
    s.problem = trace.problem_label;
    s.method = trace.config.method.id();
    s.replicate = trace.replicate;
    s.true_norms.reserve(trace.records.size());
    for (const auto& r : trace.records) s.true_norms.push_back(r.true_norm);
    return s;
}

/// Smallest k with ||g_k|| <= tol.
inline std::optional<std::size_t> steps_to_tolerance(const NormSeries& s, double tol) {
    for (std::size_t k = 0; k < s.true_norms.size(); ++k)
        if (s.true_norms[k] <= tol) return k;
    return std::nullopt;
}

inline std::optional<std::size_t> steps_to_tolerance(const RunTrace& t, double tol) {
    return steps_to_tolerance(to_series(t), tol);
}

inline double min_norm(const NormSeries& s) {
    if (s.true_norms.empty()) throw EmptyResults();
    return *std::min_element(s.true_norms.begin(), s.true_norms.end());
}

inline double min_norm(const RunTrace& t) { return min_norm(to_series(t)); }

enum class ProfileMetric { steps_to_tol, min_norm };

inline std::string to_string(ProfileMetric m) { return m == ProfileMetric::steps_to_tol ? "steps" : "min-norm"; }

/// A metric value of one method in one (problem, replicate) cell; nullopt
/// when the method has no finite value there.
struct CellMetric {
    std::string problem;
    std::size_t replicate = 0;
    std::string method;
    std::optional<double> value;
};

inline constexpr std::size_t kProfileMaxTau = 20;

struct PerfProfile {
    ProfileMetric metric = ProfileMetric::steps_to_tol;
    std::vector<std::string> methods;                 ///< sorted
    std::vector<std::vector<double>> fractions;     ///< [method][tau - 1], tau = 1..20
    std::size_t cells = 0;

    double at(const std::string& method, std::size_t tau) const {
        const auto it = std::find(methods.begin(), methods.end(), method);
        if (it == methods.end() || tau < 1 || tau > kProfileMaxTau) throw InvalidArgument("profile lookup");
        return fractions[static_cast<std::size_t>(it - methods.begin())][tau - 1];
    }
};

/// Fraction of cells where a method's metric is within tau times the best
/// method's metric of that cell. Cells without any finite metric are dropped.
inline PerfProfile performance_profile(const std::vector<CellMetric>& results, ProfileMetric metric) {
    if (results.empty()) throw EmptyResults();
    PerfProfile prof;
    prof.metric = metric;
    for (const auto& r : results) prof.methods.push_back(r.method);
    std::sort(prof.methods.begin(), prof.methods.end());
    prof.methods.erase(std::unique(prof.methods.begin(), prof.methods.end()), prof.methods.end());

    std::map<std::pair<std::string, std::size_t>, std::map<std::string, std::optional<double>>> cells;
    for (const auto& r : results) {
        auto& slot = cells[{r.problem, r.replicate}][r.method];
        if (r.value && std::isfinite(*r.value)) slot = r.value;
    }

    std::vector<std::vector<std::size_t>> hits(prof.methods.size(), std::vector<std::size_t>(kProfileMaxTau, 0));
    for (const auto& [key, by_method] : cells) {
        std::optional<double> best;
        for (const auto& [m, v] : by_method)
            if (v && (!best || *v < *best)) best = v;
        if (!best) continue;
        ++prof.cells;
        for (std::size_t mi = 0; mi < prof.methods.size(); ++mi) {
            const auto it = by_method.find(prof.methods[mi]);
            if (it == by_method.end() || !it->second) continue;
            for (std::size_t tau = 1; tau <= kProfileMaxTau; ++tau)
                if (*it->second <= static_cast<double>(tau) * *best) ++hits[mi][tau - 1];
        }
    }
    if (prof.cells == 0) throw EmptyResults();
    prof.fractions.assign(prof.methods.size(), std::vector<double>(kProfileMaxTau, 0.0));
    for (std::size_t mi = 0; mi < prof.methods.size(); ++mi)
        for (std::size_t t = 0; t < kProfileMaxTau; ++t)
            prof.fractions[mi][t] = static_cast<double>(hits[mi][t]) / static_cast<double>(prof.cells);
    return prof;
}

inline std::vector<CellMetric> collect_metric(const std::vector<NormSeries>& series, ProfileMetric metric,
                                              double tol) {
    std::vector<CellMetric> out;
    out.reserve(series.size());
    for (const auto& s : series) {
        CellMetric c{s.problem, s.replicate, s.method, std::nullopt};
        if (metric == ProfileMetric::steps_to_tol) {
            if (auto k = steps_to_tolerance(s, tol)) c.value = static_cast<double>(*k);
        } else if (!s.true_norms.empty()) {
            c.value = min_norm(s);
        }
        out.push_back(std::move(c));
    }
    return out;
}

/// Per-step mean of log10 ||g_k|| across runs. Runs that stopped early are
/// held at their final value. Exact zeros are floored at the smallest
/// normal double.
inline std::vector<double> average_log_norm(const std::vector<NormSeries>& runs) {
    if (runs.empty()) throw EmptyResults();
    std::size_t length = 0;
    for (const auto& r : runs) {
        if (r.true_norms.empty()) throw EmptyResults();
        length = std::max(length, r.true_norms.size());
    }
    std::vector<double> curve(length, 0.0);
    for (std::size_t k = 0; k < length; ++k) {
        double sum = 0.0;
        for (const auto& r : runs) {
            const double norm = r.true_norms[std::min(k, r.true_norms.size() - 1)];
            sum += std::log10(std::max(norm, std::numeric_limits<double>::min()));
        }
        curve[k] = sum / static_cast<double>(runs.size());
    }
    return curve;
}

inline void write_profile_csv(std::ostream& out, const PerfProfile& prof) {
    out << "method,tau,fraction\n";
    for (std::size_t mi = 0; mi < prof.methods.size(); ++mi)
        for (std::size_t tau = 1; tau <= kProfileMaxTau; ++tau)
            out << prof.methods[mi] << ',' << tau << ',' << text::format_double(prof.fractions[mi][tau - 1]) << '\n';
}

/// Groups runs by method and writes one averaged curve per method.
inline void write_curve_csv(std::ostream& out, const std::vector<NormSeries>& runs) {
    if (runs.empty()) throw EmptyResults();
    std::map<std::string, std::vector<NormSeries>> by_method;
    for (const auto& r : runs) by_method[r.method].push_back(r);
    out << "method,k,mean_log10_norm\n";
    for (const auto& [method, group] : by_method) {
        const auto curve = average_log_norm(group);
        for (std::size_t k = 0; k < curve.size(); ++k)
            out << method << ',' << k << ',' << text::format_double(curve[k]) << '\n';
    }
}

} // namespace nqn
