#pragma once

// Trace files: one CSV per (problem, method, replicate) named
// <problem>__<method>__r<replicate>.csv with header
//   k,true_norm,mean_norm,alpha,q,flags
// plus manifest.json echoing the suite configuration and the cell list.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nqn/errors.hpp"
#include "nqn/harness.hpp"
#include "nqn/metrics.hpp"
#include "nqn/text.hpp"

namespace nqn {

inline constexpr const char* kTraceHeader = "k,true_norm,mean_norm,alpha,q,flags";

/// Replaces characters outside [A-Za-z0-9._-] and collapses "__".
inline std::string sanitize_label(const std::string& label) {
    std::string out;
    for (char ch : label) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                        ch == '.' || ch == '-' || ch == '_';
        const char c = ok ? ch : '_';
        if (c == '_' && !out.empty() && out.back() == '_') continue;
        out.push_back(c);
    }
    return out.empty() ? std::string("problem") : out;
}

inline std::string trace_file_name(const std::string& problem, const std::string& method_id, std::size_t replicate) {
    return sanitize_label(problem) + "__" + method_id + "__r" + std::to_string(replicate) + ".csv";
}

struct TraceFileKey {
    std::string problem;
    std::string method;
    std::size_t replicate = 0;
};

inline std::optional<TraceFileKey> parse_trace_file_name(const std::string& name) {
    if (name.size() < 4 || name.substr(name.size() - 4) != ".csv") return std::nullopt;
    const std::string stem = name.substr(0, name.size() - 4);
    const auto rep_pos = stem.rfind("__r");
    if (rep_pos == std::string::npos || rep_pos + 3 >= stem.size()) return std::nullopt;
    const std::string rep = stem.substr(rep_pos + 3);
    if (!std::all_of(rep.begin(), rep.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    const std::string head = stem.substr(0, rep_pos);
    const auto method_pos = head.rfind("__");
    if (method_pos == std::string::npos || method_pos == 0) return std::nullopt;
    TraceFileKey key;
    key.problem = head.substr(0, method_pos);
    key.method = head.substr(method_pos + 2);
    key.replicate = static_cast<std::size_t>(std::stoull(rep));
    if (key.method.empty()) return std::nullopt;
    return key;
}

inline void write_trace_csv(std::ostream& out, const RunTrace& trace) {
    out << kTraceHeader << '\n';
    for (const auto& r : trace.records) {
        out << r.k << ',' << text::format_double(r.true_norm) << ',' << text::format_double(r.mean_norm) << ','
            << text::format_double(r.alpha) << ',' << text::format_double(r.objective) << ','
            << r.flags.to_string() << '\n';
    }
}

/// Rows of a trace CSV; x and directions are not stored in the file.
inline std::vector<IterateRecord> read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("trace: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) throw ParseError("trace: unexpected header '" + line + "'");
    std::vector<IterateRecord> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cols = text::split(line, ',');
        if (cols.size() != 6) throw ParseError("trace line " + std::to_string(line_no) + ": expected 6 columns");
        IterateRecord r;
        r.k = static_cast<std::size_t>(text::parse_double(cols[0]));
        r.true_norm = text::parse_double(cols[1]);
        r.mean_norm = text::parse_double(cols[2]);
        r.alpha = text::parse_double(cols[3]);
        r.objective = text::parse_double(cols[4]);
        r.flags = StepFlags::parse(cols[5]);
        if (!rows.empty() && r.k <= rows.back().k)
            throw ParseError("trace line " + std::to_string(line_no) + ": k not increasing");
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::ordered_json config_json(const SuiteConfig& suite) {
    nlohmann::ordered_json j;
    j["tol"] = text::format_double(suite.base.tol);
    j["max_steps"] = suite.base.max_steps;
    j["sigma2"] = text::format_double(suite.base.sigma2);
    j["samples"] = suite.base.sample_count;
    j["delta_rel"] = text::format_double(suite.base.delta_rel);
    j["master_seed"] = suite.master_seed;
    j["replicates"] = suite.replicates;
    j["initial_point"] = suite.base.initial_point.size() == 0 ? "zero" : "custom";
    auto methods = nlohmann::ordered_json::array();
    for (const auto& m : suite.methods) {
        nlohmann::ordered_json mj;
        mj["id"] = m.id();
        mj["name"] = m.name();
        if (m.is_ccqn()) {
            mj["beta"] = text::format_double(m.beta);
            mj["K"] = m.effective_window();
        }
        methods.push_back(mj);
    }
    j["methods"] = methods;
    return j;
}

struct ProblemSource {
    std::string label;
    std::string path;   ///< empty when generated in-process
    std::size_t dimension = 0;
};

/// Writes every trace and the manifest into dir (created if missing).
inline void write_run_directory(const std::filesystem::path& dir, const std::vector<RunTrace>& traces,
                                const SuiteConfig& suite, const std::vector<ProblemSource>& problems) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format"] = "nqn-run/1";
    manifest["config"] = config_json(suite);
    auto pj = nlohmann::ordered_json::array();
    for (const auto& p : problems) {
        nlohmann::ordered_json e;
        e["label"] = p.label;
        e["path"] = p.path;
        e["dimension"] = p.dimension;
        pj.push_back(e);
    }
    manifest["problems"] = pj;
    auto cells = nlohmann::ordered_json::array();
    for (const auto& t : traces) {
        const std::string file = trace_file_name(t.problem_label, t.config.method.id(), t.replicate);
        std::ofstream out(dir / file, std::ios::binary);
        if (!out) throw Error("cannot write '" + (dir / file).string() + "'");
        write_trace_csv(out, t);
        nlohmann::ordered_json c;
        c["file"] = file;
        c["problem"] = t.problem_label;
        c["method"] = t.config.method.id();
        c["replicate"] = t.replicate;
        c["seed"] = t.seed;
        c["termination"] = to_string(t.termination);
        c["steps"] = t.records.empty() ? 0 : t.records.back().k;
        cells.push_back(c);
    }
    manifest["cells"] = cells;
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
}

/// Reads every trace CSV whose name follows the trace naming scheme,
/// sorted by file name.
inline std::vector<NormSeries> load_run_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("not a directory: '" + dir.string() + "'");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && parse_trace_file_name(entry.path().filename().string()))
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<NormSeries> out;
    for (const auto& f : files) {
        const auto key = *parse_trace_file_name(f.filename().string());
        std::ifstream in(f, std::ios::binary);
        NormSeries s;
        s.problem = key.problem;
        s.method = key.method;
        s.replicate = key.replicate;
        for (const auto& r : read_trace_csv(in)) s.true_norms.push_back(r.true_norm);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace nqn
