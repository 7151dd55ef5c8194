#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mfgraph/gradient_flow.hpp"
#include "mfgraph/io/config.hpp"
#include "mfgraph/master_eq.hpp"
#include "mfgraph/mfg_core.hpp"
#include "mfgraph/twopoint.hpp"

namespace mfgraph::io {

enum ExitCode { exit_ok = 0, exit_config = 2, exit_nonconvergence = 3, exit_domain = 4 };

inline constexpr int schema_version = 1;

struct RunOptions {
    std::optional<std::string> out_dir;  // overrides output.dir
    int threads = 0;
    bool quiet = false;
};

/// Rows of doubles written with 17 significant digits.
class Table {
public:
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<double> row) { rows_.push_back(std::move(row)); }

    void write(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary);
        mfgraph::detail::require(f.good(), Errc::InvalidArgument, "cannot write " + path.string());
        for (std::size_t k = 0; k < header_.size(); ++k) f << (k ? "," : "") << header_[k];
        f << '\n';
        char buf[40];
        for (const auto& row : rows_) {
            for (std::size_t k = 0; k < row.size(); ++k) {
                std::snprintf(buf, sizeof buf, "%.17g", row[k]);
                f << (k ? "," : "") << buf;
            }
            f << '\n';
        }
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

namespace detail {

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Vector(m.row(i).transpose())));
    return out;
}

/// Finite values as numbers; inf and nan as strings (JSON has no literal for them).
inline json number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : v > 0 ? "inf" : "-inf";
}

inline std::vector<std::string> indexed(const std::string& name, int n) {
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i) out.push_back(name + "_" + std::to_string(i));
    return out;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path, std::ios::binary);
    mfgraph::detail::require(f.good(), Errc::InvalidArgument, "cannot write " + path.string());
    f << j.dump(2) << '\n';
}

struct Outcome {
    json results;
    Table table{{}};
    bool converged = true;
};

inline Outcome run_validate(const RunConfig& cfg, std::ostream& log, bool quiet) {
    const MarkovGraph g = build_graph(cfg.problem);
    Outcome out;
    json edges = json::array();
    out.table = Table({"i", "j", "omega", "q_ij", "q_ji"});
    for (const Edge& e : g.edges()) {
        edges.push_back({{"i", e.i}, {"j", e.j}, {"omega", e.weight}});
        out.table.add({double(e.i), double(e.j), e.weight, g.rates()(e.i, e.j), g.rates()(e.j, e.i)});
    }
    out.results = {{"states", g.size()},
                   {"pi", to_json(g.invariant())},
                   {"omega", to_json(g.weights())},
                   {"edges", edges},
                   {"detailed_balance_residual", g.detailed_balance_residual()},
                   {"spectral_gap", spectral_gap(g)}};
    if (!quiet) {
        const Eigen::IOFormat fmt(Eigen::StreamPrecision, 0, ", ", "\n", "  ");
        log << "pi:\n" << g.invariant().transpose().format(fmt) << "\nomega:\n" << g.weights().format(fmt) << '\n';
    }
    return out;
}

inline Outcome run_flow(const RunConfig& cfg) {
    const MFGProblem prob = build_problem(cfg.problem);
    const Activation& a = prob.activation;
    const GeneratorPhi& phi = *a.phi();
    const Numerics& num = cfg.numerics;
    FlowTrajectory tr;
    if (num.flow_form == "forward") tr = integrate_forward(prob.graph, phi, prob.p0, num.t_end, num.dt);
    else if (num.flow_form == "onsager") tr = integrate_onsager(prob.graph, a, phi, prob.p0, num.t_end, num.dt);
    else tr = integrate_generalized(prob.graph, a, phi, *a.psi(), prob.p0, num.t_end, num.dt);
    const int n = prob.size();
    std::vector<std::string> header = {"t"};
    for (const std::string& h : indexed("p", n)) header.push_back(h);
    header.push_back("dissipation");
    Outcome out;
    out.table = Table(header);
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        std::vector<double> row = {tr.times[k]};
        for (int i = 0; i < n; ++i) row.push_back(tr.densities[k](i));
        row.push_back(tr.dissipation[k]);
        out.table.add(std::move(row));
    }
    out.results = {{"form", num.flow_form},
                   {"t_end", tr.times.back()},
                   {"steps", tr.times.size() - 1},
                   {"halvings", tr.halvings},
                   {"final_density", to_json(tr.densities.back())},
                   {"final_dissipation", tr.dissipation.back()},
                   {"distance_to_pi", (tr.densities.back() - prob.graph.invariant()).cwiseAbs().maxCoeff()}};
    return out;
}

inline SolverOptions solver_options(const Numerics& num) {
    SolverOptions o;
    o.n_t = num.n_t;
    o.tol = num.tol;
    o.damping = num.damping;
    o.max_iterations = num.max_iterations;
    o.method = num.method == "convex"        ? SolverMethod::convex
               : num.method == "fixed_point" ? SolverMethod::fixed_point
                                             : SolverMethod::automatic;
    return o;
}

inline Outcome run_wasserstein(const RunConfig& cfg) {
    const MFGProblem prob = build_problem(cfg.problem);
    const double alpha = cfg.problem.alpha;
    const Vector& target = *prob.pinned_terminal;
    Outcome out;
    if (prob.size() == 2) {
        const double w = wasserstein_alpha(reduce(prob), prob.p0(0), target(0), alpha);
        out.table = Table({"p0_1", "p1_1", "alpha", "W"});
        out.table.add({prob.p0(0), target(0), alpha, w});
        out.results = {{"W", w}, {"alpha", alpha}, {"method", "closed_form"}};
        return out;
    }
    SolverOptions o = solver_options(cfg.numerics);
    o.method = SolverMethod::convex;
    o.allow_nonconvergence = true;
    const MFGSolution sol = solve(prob, o);
    const double horizon = prob.horizon();
    const double w = std::pow(alpha * -sol.value * std::pow(horizon, alpha - 1.0), 1.0 / alpha);
    std::vector<std::string> header = {"t"};
    for (const std::string& h : indexed("p", prob.size())) header.push_back(h);
    out.table = Table(header);
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        std::vector<double> row = {sol.times[k]};
        for (int i = 0; i < prob.size(); ++i) row.push_back(sol.p[k](i));
        out.table.add(std::move(row));
    }
    out.converged = sol.diagnostics.converged;
    out.results = {{"W", w},
                   {"alpha", alpha},
                   {"method", "convex"},
                   {"n_t", sol.steps()},
                   {"iterations", sol.diagnostics.iterations},
                   {"residual", number(sol.diagnostics.residual)},
                   {"converged", sol.diagnostics.converged}};
    return out;
}

inline Outcome run_mfg(const RunConfig& cfg) {
    const MFGProblem prob = build_problem(cfg.problem);
    SolverOptions o = solver_options(cfg.numerics);
    o.allow_nonconvergence = true;
    const MFGSolution sol = solve(prob, o);
    const int n = prob.size();
    std::vector<std::string> header = {"t"};
    for (const std::string& h : indexed("p", n)) header.push_back(h);
    for (const std::string& h : indexed("phi", n)) header.push_back(h);
    header.push_back("hamiltonian");
    Outcome out;
    out.table = Table(header);
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        std::vector<double> row = {sol.times[k]};
        for (int i = 0; i < n; ++i) row.push_back(sol.p[k](i));
        for (int i = 0; i < n; ++i) row.push_back(sol.phi[k](i));
        row.push_back(sol.hamiltonian_trace[k]);
        out.table.add(std::move(row));
    }
    const SolverDiagnostics& d = sol.diagnostics;
    out.converged = d.converged;
    out.results = {{"method", d.method},
                   {"iterations", d.iterations},
                   {"residual", number(d.residual)},
                   {"converged", d.converged},
                   {"n_t", sol.steps()},
                   {"continuity_residual", d.continuity_residual},
                   {"adjoint_residual", d.adjoint_residual},
                   {"final_density", to_json(sol.p.back())},
                   {"value", std::isfinite(sol.value) ? json(sol.value) : json(nullptr)}};
    return out;
}

inline void add_trajectory(Outcome& out, const ReducedTrajectory& tr) {
    out.table = Table({"t", "x", "y", "hamiltonian"});
    for (std::size_t k = 0; k < tr.size(); ++k) out.table.add({tr.times[k], tr.x[k], tr.y[k], tr.hamiltonian[k]});
}

inline Outcome run_twopoint(const RunConfig& cfg) {
    const MFGProblem prob = build_problem(cfg.problem);
    const TwoPointProblem tp = reduce(prob);
    ShootingOptions o;
    o.tol = std::min(1e-10, cfg.numerics.tol);
    o.steps = cfg.numerics.n_t;
    Outcome out;
    if (prob.pinned_terminal) {
        const PlanningResult r = solve_planning(tp, prob.p0(0), (*prob.pinned_terminal)(0), prob.horizon(), o);
        add_trajectory(out, r.trajectory);
        out.results = {{"mode", "planning"},
                       {"H0", r.H0},
                       {"x_T", (*prob.pinned_terminal)(0)},
                       {"iterations", r.iterations},
                       {"time_residual", r.time_residual}};
        return out;
    }
    const GameResult r = solve_potential_game(tp, prob.p0(0), prob.horizon(), o);
    add_trajectory(out, r.trajectory);
    out.results = {{"mode", "game"},
                   {"H0", r.H0},
                   {"x_T", r.x_T},
                   {"iterations", r.iterations},
                   {"time_residual", r.time_residual},
                   {"terminal_residual", r.terminal_residual},
                   {"method", r.method},
                   {"roots_found", r.roots_found}};
    return out;
}

inline Outcome run_master(const RunConfig& cfg, int threads) {
    const MFGProblem prob = build_problem(cfg.problem);
    const TwoPointProblem tp = reduce(prob);
    const Numerics& num = cfg.numerics;
    ShootingOptions o;
    o.tol = std::min(1e-9, num.tol);
    const MasterField f =
        reduced_master_grid(tp, linspace(num.delta, 1.0 - num.delta, num.nx), linspace(tp.t0, tp.T, num.nt), threads, o);
    const MasterResiduals r = master_residuals(tp, f);
    Outcome out;
    out.table = Table({"x", "t", "w", "u_1", "u_2", "residual"});
    for (std::size_t it = 0; it < f.t.size(); ++it)
        for (std::size_t ix = 0; ix < f.x.size(); ++ix)
            out.table.add({f.x[ix], f.t[it], f.w[it][ix], f.u1[it][ix], f.u2[it][ix], r.reduced[it][ix]});
    json holes = json::array();
    for (const MasterField::Hole& h : f.failures)
        holes.push_back({{"ix", h.ix},
                         {"it", h.it},
                         {"x", f.x[static_cast<std::size_t>(h.ix)]},
                         {"t", f.t[static_cast<std::size_t>(h.it)]},
                         {"reason", h.reason}});
    out.results = {{"nx", num.nx},
                   {"nt", num.nt},
                   {"delta", num.delta},
                   {"residual_max", r.reduced_max},
                   {"component_residual_max", r.component_max},
                   {"failures", holes}};
    return out;
}

inline json envelope(const std::string& command, int code) {
    return {{"schema_version", schema_version}, {"command", command}, {"exit_code", code}};
}

/// Best-effort output location for configs that fail validation.
inline OutputSpec peek_output(const std::string& text) {
    OutputSpec out;
    const json root = json::parse(text, nullptr, false);
    if (root.is_object() && root.contains("output") && root["output"].is_object()) {
        const json& o = root["output"];
        if (o.contains("dir") && o["dir"].is_string()) out.dir = o["dir"].get<std::string>();
        if (o.contains("stem") && o["stem"].is_string()) out.stem = o["stem"].get<std::string>();
    }
    if (out.stem.empty() || out.stem.find('/') != std::string::npos) out.stem = "run";
    return out;
}

inline std::string peek_command(const std::string& text) {
    const json root = json::parse(text, nullptr, false);
    if (root.is_object() && root.contains("command") && root["command"].is_string())
        return root["command"].get<std::string>();
    return "";
}

}  // namespace detail

/// Parses, dispatches and writes <stem>.csv and <stem>.summary.json, or
/// <stem>.error.json on failure. Returns the process exit code.
inline int run_text(const std::string& text, const RunOptions& opts, std::ostream& log = std::cout) {
    RunConfig cfg;
    OutputSpec where = detail::peek_output(text);
    if (opts.out_dir) where.dir = *opts.out_dir;
    auto error_file = [&](const std::string& command, int code, json error) {
        json j = detail::envelope(command, code);
        j["error"] = std::move(error);
        try {
            std::filesystem::create_directories(where.dir);
            detail::write_json(std::filesystem::path(where.dir) / (where.stem + ".error.json"), j);
        } catch (const std::exception& e) {
            log << "cannot write error file: " << e.what() << '\n';
        }
        if (!opts.quiet) log << j["error"]["type"].get<std::string>() << ": " << j["error"]["message"].get<std::string>() << '\n';
        return code;
    };

    try {
        cfg = parse_config(text);
    } catch (const SchemaError& e) {
        json issues = json::array();
        for (const SchemaIssue& i : e.issues()) issues.push_back({{"path", i.path}, {"message", i.message}});
        return error_file(detail::peek_command(text), exit_config,
                          {{"type", "SchemaError"}, {"message", e.what()}, {"issues", issues}});
    }

    // Errors raised while assembling the problem are input errors.
    try {
        if (cfg.command != "validate") build_problem(cfg.problem);
        else build_graph(cfg.problem);
    } catch (const Error& e) {
        return error_file(cfg.command, exit_config, {{"type", errc_name(e.code())}, {"message", e.what()}});
    }

    detail::Outcome outcome;
    try {
        if (cfg.command == "validate") outcome = detail::run_validate(cfg, log, opts.quiet);
        else if (cfg.command == "flow") outcome = detail::run_flow(cfg);
        else if (cfg.command == "wasserstein") outcome = detail::run_wasserstein(cfg);
        else if (cfg.command == "mfg") outcome = detail::run_mfg(cfg);
        else if (cfg.command == "twopoint") outcome = detail::run_twopoint(cfg);
        else outcome = detail::run_master(cfg, opts.threads);
    } catch (const Error& e) {
        const int code = is_convergence_failure(e.code()) ? exit_nonconvergence : exit_domain;
        return error_file(cfg.command, code, {{"type", errc_name(e.code())}, {"message", e.what()}});
    }

    const int code = outcome.converged ? exit_ok : exit_nonconvergence;
    json summary = detail::envelope(cfg.command, code);
    summary["status"] = outcome.converged ? "ok" : "not_converged";
    summary["csv"] = where.stem + ".csv";
    summary["results"] = outcome.results;
    try {
        const std::filesystem::path dir(where.dir);
        std::filesystem::create_directories(dir);
        outcome.table.write(dir / (where.stem + ".csv"));
        detail::write_json(dir / (where.stem + ".summary.json"), summary);
    } catch (const std::exception& e) {
        return error_file(cfg.command, exit_config, {{"type", "OutputError"}, {"message", e.what()}});
    }
    if (code != exit_ok) {
        std::string message = "solver stopped before reaching its tolerance";
        json error = {{"type", "NonConvergence"}};
        if (outcome.results.contains("residual")) {
            error["residual"] = outcome.results["residual"];
            message += " after " + outcome.results["iterations"].dump() + " iterations, residual " +
                       outcome.results["residual"].dump();
        }
        error["message"] = message;
        error_file(cfg.command, code, error);
    }
    if (!opts.quiet) log << cfg.command << ": " << summary["status"].get<std::string>() << '\n';
    return code;
}

inline int run_file(const std::string& path, const RunOptions& opts, std::ostream& log = std::cout) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        if (!opts.quiet) log << "cannot read config " << path << '\n';
        return exit_config;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return run_text(ss.str(), opts, log);
}

}  // namespace mfgraph::io
