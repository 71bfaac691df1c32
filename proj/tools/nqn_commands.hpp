#pragma once

// Command-line front end. `run_cli` is the whole program minus main(), so
// the tests can drive it with captured streams.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <nqn/nqn.hpp>

namespace nqn::cli {

struct GenOptions {
    std::size_t n = 100;
    double a = -1.0;
    double b = 1.0;
    double eps = 0.3;
    std::uint64_t seed = 0;
    std::string label;
    std::string out;
};

struct RunOptions {
    std::vector<std::string> problems;
    std::vector<std::string> methods;
    double beta = 0.0;
    std::size_t window = 10;
    double sigma2 = 0.0;
    std::size_t samples = 20;
    std::size_t seeds = 30;
    std::uint64_t master_seed = 0;
    double tol = 1e-6;
    std::size_t maxk = 500;
    double delta_rel = 1e-8;
    std::size_t workers = 0;
    std::string out_dir;
};

struct ProfileOptions {
    std::vector<std::string> dirs;
    std::string metric = "steps";
    double tol = 1e-6;
    std::string out;
};

struct TraceOptions {
    std::vector<std::string> dirs;
    std::string out;
};

inline void write_or_print(const std::string& path, const std::string& content, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << content;
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw Error("cannot write '" + path + "'");
    file << content;
}

inline int cmd_gen(const GenOptions& o, std::ostream& out) {
    const GenSpec spec{o.n, o.a, o.b, o.eps, o.seed};
    const auto problem = gen_random(spec, o.label);
    store_problem(problem, o.out);
    out << "wrote " << o.out << " (" << problem.label() << ", n=" << problem.dimension() << ")\n";
    return 0;
}

inline std::vector<Method> parse_methods(const RunOptions& o) {
    std::vector<Method> methods;
    for (const auto& entry : o.methods)
        for (auto name : text::split(entry, ','))
            if (!name.empty()) methods.push_back(Method::parse(std::string(name), o.beta, o.window));
    if (methods.empty()) throw InvalidArgument("no method given");
    return methods;
}

inline int cmd_run(const RunOptions& o, std::ostream& out) {
    SuiteConfig suite;
    suite.methods = parse_methods(o);
    suite.base.tol = o.tol;
    suite.base.max_steps = o.maxk;
    suite.base.sigma2 = o.sigma2;
    suite.base.sample_count = o.samples;
    suite.base.delta_rel = o.delta_rel;
    suite.master_seed = o.master_seed;
    suite.replicates = o.seeds;
    suite.workers = o.workers;
    for (const auto& m : suite.methods) {
        RunConfig c = suite.base;
        c.method = m;
        c.validate();
    }

    std::vector<QuadraticProblem> problems;
    std::vector<ProblemSource> sources;
    std::set<std::string> labels;
    for (const auto& path : o.problems) {
        problems.push_back(load_problem(path));
        const auto& p = problems.back();
        if (!labels.insert(sanitize_label(p.label())).second)
            throw InvalidArgument("duplicate problem label '" + p.label() + "'");
        sources.push_back({p.label(), path, p.dimension()});
    }

    const auto traces = run_suite(problems, suite);
    write_run_directory(o.out_dir, traces, suite, sources);
    out << "wrote " << traces.size() << " traces to " << o.out_dir << '\n';
    return 0;
}

inline std::vector<NormSeries> load_dirs(const std::vector<std::string>& dirs) {
    std::vector<NormSeries> all;
    for (const auto& d : dirs) {
        auto part = load_run_directory(d);
        all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    if (all.empty()) throw EmptyResults();
    return all;
}

inline int cmd_profile(const ProfileOptions& o, std::ostream& out) {
    const ProfileMetric metric = o.metric == "steps" ? ProfileMetric::steps_to_tol : ProfileMetric::min_norm;
    const auto prof = performance_profile(collect_metric(load_dirs(o.dirs), metric, o.tol), metric);
    std::ostringstream csv;
    write_profile_csv(csv, prof);
    write_or_print(o.out, csv.str(), out);
    return 0;
}

inline int cmd_trace(const TraceOptions& o, std::ostream& out) {
    std::ostringstream csv;
    write_curve_csv(csv, load_dirs(o.dirs));
    write_or_print(o.out, csv.str(), out);
    return 0;
}

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Noisy quasi-Newton experiments on random quadratics", "nqn"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* g = app.add_subcommand("gen", "generate a random SPD quadratic problem");
    g->add_option("--n", gen.n, "dimension")->check(CLI::PositiveNumber);
    g->add_option("--a", gen.a, "lower end of the Q entries");
    g->add_option("--b", gen.b, "upper end of the Q entries");
    g->add_option("--eps", gen.eps, "diagonal shift scale")->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed, "generator seed");
    g->add_option("--label", gen.label, "problem label (default rand_n<n>_s<seed>)");
    g->add_option("--out", gen.out, "output file")->required();

    RunOptions run;
    auto* r = app.add_subcommand("run", "run methods over problems and seeds");
    r->add_option("--problem", run.problems, "problem file (repeatable)")->required();
    r->add_option("--method", run.methods, "sd|cg|bfgs|mlbfgs|ccqn|lmccqn, comma list or repeated")->required();
    r->add_option("--beta", run.beta, "CCQN exclusion level in [0,1)");
    r->add_option("--K", run.window, "lm-CCQN window");
    r->add_option("--sigma2", run.sigma2, "gradient noise variance")->check(CLI::NonNegativeNumber);
    r->add_option("--samples", run.samples, "gradient samples per step")->check(CLI::PositiveNumber);
    r->add_option("--seeds", run.seeds, "replicates per (problem, method)")->check(CLI::PositiveNumber);
    r->add_option("--seed", run.master_seed, "master seed");
    r->add_option("--tol", run.tol, "true gradient norm tolerance")->check(CLI::PositiveNumber);
    r->add_option("--maxk", run.maxk, "maximum steps")->check(CLI::PositiveNumber);
    r->add_option("--delta", run.delta_rel, "CCQN strict-bound margin");
    r->add_option("--workers", run.workers, "worker threads (0: NQN_WORKERS or 1)");
    r->add_option("--out-dir", run.out_dir, "output directory")->required();

    ProfileOptions prof;
    auto* p = app.add_subcommand("profile", "performance profile over trace directories");
    p->add_option("--dir", prof.dirs, "trace directory (repeatable)")->required();
    p->add_option("--metric", prof.metric, "steps or min-norm")->check(CLI::IsMember({"steps", "min-norm"}));
    p->add_option("--tol", prof.tol, "steps-profile tolerance")->check(CLI::PositiveNumber);
    p->add_option("--out", prof.out, "output CSV (default stdout)");

    TraceOptions tr;
    auto* t = app.add_subcommand("trace", "average log10 gradient norm per method and step");
    t->add_option("--dir", tr.dirs, "trace directory (repeatable)")->required();
    t->add_option("--out", tr.out, "output CSV (default stdout)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*g) return cmd_gen(gen, out);
        if (*r) return cmd_run(run, out);
        if (*p) return cmd_profile(prof, out);
        if (*t) return cmd_trace(tr, out);
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace nqn::cli
