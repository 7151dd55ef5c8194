#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgraph/activation.hpp"
#include "mfgraph/lagrangian.hpp"
#include "mfgraph/markov_graph.hpp"
#include "mfgraph/mfg_problem.hpp"

namespace mfgraph::io {

using json = nlohmann::json;

struct SchemaIssue {
    std::string path;  // JSON pointer
    std::string message;
};

class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(std::vector<SchemaIssue> issues)
        : std::runtime_error(summarize(issues)), issues_(std::move(issues)) {}

    const std::vector<SchemaIssue>& issues() const { return issues_; }

private:
    static std::string summarize(const std::vector<SchemaIssue>& issues) {
        std::string s = "invalid config";
        for (const SchemaIssue& i : issues) s += "\n  " + i.path + ": " + i.message;
        return s;
    }

    std::vector<SchemaIssue> issues_;
};

/// F or G. Forms: zero, quadratic_W (F = W p + b), custom_table (two states:
/// F_1, F_2 tabulated against x = p_1, linear in between) and, for G only,
/// pinned (prescribed terminal density).
struct PayoffSpec {
    std::string form = "zero";
    Matrix W;
    Vector b;
    std::vector<double> x;
    std::vector<Vector> values;
    Vector density;

    bool pinned() const { return form == "pinned"; }
    bool potential() const {
        if (form == "quadratic_W") return W.size() == 0 || (W - W.transpose()).cwiseAbs().maxCoeff() == 0.0;
        return true;
    }
};

struct ProblemSpec {
    int states = 0;
    std::optional<Matrix> q_matrix;
    std::optional<Matrix> weights;
    std::optional<Vector> pi;
    std::string activation = "log_mean";
    double alpha = 2.0;
    PayoffSpec running;
    PayoffSpec terminal;
    double t0 = 0.0;
    std::optional<double> horizon;
    std::optional<Vector> p0;
};

struct Numerics {
    int n_t = 128;
    double dt = 1e-3;
    double t_end = 1.0;
    double tol = 1e-8;
    double damping = 0.5;
    long max_iterations = 0;
    std::string method = "automatic";
    std::string flow_form = "onsager";
    int nx = 40;
    int nt = 40;
    double delta = 0.1;
};

struct OutputSpec {
    std::string dir = ".";
    std::string stem = "run";
};

struct RunConfig {
    std::string command;
    ProblemSpec problem;
    Numerics numerics;
    OutputSpec output;
};

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c = {"validate", "flow", "wasserstein", "mfg", "twopoint", "master"};
    return c;
}

namespace detail {

class Reader {
public:
    std::vector<SchemaIssue> issues;

    void add(const std::string& path, const std::string& message) { issues.push_back({path, message}); }

    const json* object(const json& parent, const std::string& key, const std::string& path, bool required) {
        if (!parent.contains(key)) {
            if (required) add(path + "/" + key, "is required");
            return nullptr;
        }
        const json& v = parent.at(key);
        if (!v.is_object()) {
            add(path + "/" + key, "must be an object");
            return nullptr;
        }
        return &v;
    }

    std::optional<double> number(const json& parent, const std::string& key, const std::string& path, bool required,
                                 bool positive = false) {
        const std::string at = path + "/" + key;
        if (!parent.contains(key)) {
            if (required) add(at, "is required");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (!v.is_number()) {
            add(at, "must be a number");
            return std::nullopt;
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            add(at, "must be finite");
            return std::nullopt;
        }
        if (positive && d <= 0.0) {
            add(at, "must be positive");
            return std::nullopt;
        }
        return d;
    }

    std::optional<long> integer(const json& parent, const std::string& key, const std::string& path, long min_value) {
        const std::string at = path + "/" + key;
        if (!parent.contains(key)) return std::nullopt;
        const json& v = parent.at(key);
        if (!v.is_number_integer()) {
            add(at, "must be an integer");
            return std::nullopt;
        }
        const long n = v.get<long>();
        if (n < min_value) {
            add(at, "must be at least " + std::to_string(min_value));
            return std::nullopt;
        }
        return n;
    }

    std::optional<std::string> string(const json& parent, const std::string& key, const std::string& path,
                                      const std::vector<std::string>& allowed, bool required) {
        const std::string at = path + "/" + key;
        if (!parent.contains(key)) {
            if (required) add(at, "is required");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (!v.is_string()) {
            add(at, "must be a string");
            return std::nullopt;
        }
        std::string s = v.get<std::string>();
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::string list;
            for (const std::string& a : allowed) list += (list.empty() ? "" : ", ") + a;
            add(at, "must be one of: " + list);
            return std::nullopt;
        }
        return s;
    }

    std::optional<Vector> vector(const json& v, const std::string& at, int size) {
        if (!v.is_array()) {
            add(at, "must be an array of numbers");
            return std::nullopt;
        }
        if (size >= 0 && static_cast<int>(v.size()) != size) {
            add(at, "must have " + std::to_string(size) + " entries");
            return std::nullopt;
        }
        Vector out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
                add(at + "/" + std::to_string(i), "must be a finite number");
                return std::nullopt;
            }
            out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
        }
        return out;
    }

    std::optional<Matrix> matrix(const json& v, const std::string& at, int size) {
        if (!v.is_array() || (size >= 0 && static_cast<int>(v.size()) != size)) {
            add(at, "must be a " + std::to_string(size) + " x " + std::to_string(size) + " array");
            return std::nullopt;
        }
        Matrix out(size, size);
        for (int i = 0; i < size; ++i) {
            const auto row = vector(v[static_cast<std::size_t>(i)], at + "/" + std::to_string(i), size);
            if (!row) return std::nullopt;
            out.row(i) = row->transpose();
        }
        return out;
    }

    std::optional<Vector> density(const json& v, const std::string& at, int size) {
        auto p = vector(v, at, size);
        if (!p) return std::nullopt;
        if (p->minCoeff() < 0.0 || std::abs(p->sum() - 1.0) > 1e-10) {
            add(at, "must be nonnegative and sum to 1");
            return std::nullopt;
        }
        return p;
    }
};

inline PayoffSpec read_payoff(Reader& r, const json& parent, const std::string& key, const std::string& path, int n,
                              bool terminal) {
    PayoffSpec out;
    const std::string at = path + "/" + key;
    const json* node = r.object(parent, key, path, false);
    if (!node) return out;
    std::vector<std::string> forms = {"zero", "quadratic_W", "custom_table"};
    if (terminal) forms.push_back("pinned");
    out.form = r.string(*node, "form", at, forms, true).value_or("zero");
    if (out.form == "quadratic_W") {
        if (!node->contains("W")) {
            r.add(at + "/W", "is required");
        } else if (auto w = r.matrix(node->at("W"), at + "/W", n)) {
            out.W = *w;
        }
        out.b = Vector::Zero(n);
        if (node->contains("b"))
            if (auto b = r.vector(node->at("b"), at + "/b", n)) out.b = *b;
    } else if (out.form == "custom_table") {
        if (n != 2) r.add(at + "/form", "custom_table needs 2 states");
        if (!node->contains("x") || !node->contains("values")) {
            r.add(at, "custom_table needs x and values");
            return out;
        }
        const auto xs = r.vector(node->at("x"), at + "/x", -1);
        const json& vals = node->at("values");
        if (!xs || !vals.is_array() || vals.size() != static_cast<std::size_t>(xs->size()) || xs->size() < 2) {
            r.add(at + "/values", "needs one [F_1, F_2] row per x, at least two rows");
            return out;
        }
        out.x.assign(xs->data(), xs->data() + xs->size());
        for (std::size_t k = 0; k < out.x.size(); ++k) {
            if (k > 0 && !(out.x[k] > out.x[k - 1])) r.add(at + "/x", "must be strictly increasing");
            if (auto row = r.vector(vals[k], at + "/values/" + std::to_string(k), 2)) out.values.push_back(*row);
        }
        if (out.x.front() > 0.0 || out.x.back() < 1.0) r.add(at + "/x", "must cover [0, 1]");
    } else if (out.form == "pinned") {
        if (!node->contains("density"))
            r.add(at + "/density", "is required");
        else if (auto p = r.density(node->at("density"), at + "/density", n))
            out.density = *p;
    }
    return out;
}

}  // namespace detail

/// Parses and validates a run configuration; every problem found is
/// reported at once in a SchemaError.
inline RunConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::vector<SchemaIssue>{{"", std::string("not valid JSON: ") + e.what()}});
    }
    detail::Reader r;
    RunConfig cfg;
    if (!root.is_object()) throw SchemaError(std::vector<SchemaIssue>{{"", "config must be a JSON object"}});

    cfg.command = r.string(root, "command", "", commands(), true).value_or("");
    const bool needs_horizon = cfg.command == "mfg" || cfg.command == "twopoint" || cfg.command == "master";
    const bool needs_p0 = cfg.command != "validate" && cfg.command != "master";
    const bool two_states = cfg.command == "twopoint" || cfg.command == "master";

    ProblemSpec& p = cfg.problem;
    if (const json* prob = r.object(root, "problem", "", true)) {
        const std::string at = "/problem";
        if (auto n = r.integer(*prob, "states", at, 1)) p.states = static_cast<int>(*n);
        else if (!prob->contains("states")) r.add(at + "/states", "is required");
        const int n = p.states;
        if (n > 0) {
            if (two_states && n != 2) r.add(at + "/states", "command " + cfg.command + " needs 2 states");
            const bool has_q = prob->contains("q_matrix");
            const bool has_w = prob->contains("weights") || prob->contains("pi");
            if (has_q == has_w) r.add(at, "give exactly one of q_matrix or weights + pi");
            if (has_q) p.q_matrix = r.matrix(prob->at("q_matrix"), at + "/q_matrix", n);
            if (has_w) {
                if (!prob->contains("weights")) r.add(at + "/weights", "is required with pi");
                else p.weights = r.matrix(prob->at("weights"), at + "/weights", n);
                if (!prob->contains("pi")) r.add(at + "/pi", "is required with weights");
                else p.pi = r.vector(prob->at("pi"), at + "/pi", n);
            }
            p.activation = r.string(*prob, "activation", at,
                                    {"quadratic", "log_mean", "arithmetic", "geometric", "harmonic"}, false)
                               .value_or("log_mean");
            if (const json* lag = r.object(*prob, "lagrangian", at, false)) {
                if (auto a = r.number(*lag, "alpha", at + "/lagrangian", true)) {
                    if (*a <= 1.0) r.add(at + "/lagrangian/alpha", "must exceed 1");
                    else p.alpha = *a;
                }
            }
            p.running = detail::read_payoff(r, *prob, "running", at, n, false);
            p.terminal = detail::read_payoff(r, *prob, "terminal", at, n, true);
            p.t0 = r.number(*prob, "t0", at, false).value_or(0.0);
            p.horizon = r.number(*prob, "horizon", at, needs_horizon, true);
            if (prob->contains("p0")) p.p0 = r.density(prob->at("p0"), at + "/p0", n);
            else if (needs_p0) r.add(at + "/p0", "is required");
            if (cfg.command == "wasserstein" && !p.terminal.pinned())
                r.add(at + "/terminal", "wasserstein needs a pinned terminal density");
        }
    }

    Numerics& num = cfg.numerics;
    if (const json* nm = r.object(root, "numerics", "", false)) {
        const std::string at = "/numerics";
        num.n_t = static_cast<int>(r.integer(*nm, "n_t", at, 1).value_or(num.n_t));
        num.dt = r.number(*nm, "dt", at, false, true).value_or(num.dt);
        num.t_end = r.number(*nm, "t_end", at, false, true).value_or(num.t_end);
        num.tol = r.number(*nm, "tol", at, false, true).value_or(num.tol);
        if (auto d = r.number(*nm, "damping", at, false, true)) {
            if (*d > 1.0) r.add(at + "/damping", "must lie in (0, 1]");
            else num.damping = *d;
        }
        num.max_iterations = r.integer(*nm, "max_iterations", at, 0).value_or(0);
        num.method = r.string(*nm, "method", at, {"automatic", "convex", "fixed_point"}, false).value_or(num.method);
        num.flow_form =
            r.string(*nm, "flow_form", at, {"forward", "onsager", "generalized"}, false).value_or(num.flow_form);
        num.nx = static_cast<int>(r.integer(*nm, "nx", at, 2).value_or(num.nx));
        num.nt = static_cast<int>(r.integer(*nm, "nt", at, 2).value_or(num.nt));
        if (auto d = r.number(*nm, "delta", at, false, true)) {
            if (*d < 1e-3 || *d >= 0.5) r.add(at + "/delta", "must lie in [1e-3, 0.5)");
            else num.delta = *d;
        }
    }
    if (cfg.command == "mfg" && num.method == "convex" && (!p.running.potential() || !p.terminal.potential()))
        r.add("/numerics/method", "convex solver requires potential structure");

    if (const json* out = r.object(root, "output", "", false)) {
        cfg.output.dir = r.string(*out, "dir", "/output", {}, false).value_or(cfg.output.dir);
        cfg.output.stem = r.string(*out, "stem", "/output", {}, false).value_or(cfg.output.stem);
        if (cfg.output.stem.empty() || cfg.output.stem.find('/') != std::string::npos)
            r.add("/output/stem", "must be a plain non-empty file name");
    }

    if (!r.issues.empty()) throw SchemaError(std::move(r.issues));
    return cfg;
}

inline MarkovGraph build_graph(const ProblemSpec& p) {
    return p.q_matrix ? build_from_q(*p.q_matrix) : build_from_weights(*p.weights, *p.pi);
}

namespace detail {

/// Piecewise-linear table in x = p_1 with its exact antiderivative of
/// F_1 - F_2 as potential.
inline PayoffField table_payoff(const std::vector<double>& xs, const std::vector<Vector>& vals) {
    std::vector<double> prim(xs.size(), 0.0);
    for (std::size_t k = 1; k < xs.size(); ++k)
        prim[k] = prim[k - 1] + 0.5 * (xs[k] - xs[k - 1]) *
                                    ((vals[k - 1](0) - vals[k - 1](1)) + (vals[k](0) - vals[k](1)));
    auto locate = [xs](double x) {
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(it - xs.begin()), 1, xs.size() - 1) - 1;
        return std::pair{k, (x - xs[k]) / (xs[k + 1] - xs[k])};
    };
    PayoffField out;
    out.field = [vals, locate](const Vector& p) {
        const auto [k, s] = locate(p(0));
        return Vector((1.0 - s) * vals[k] + s * vals[k + 1]);
    };
    out.potential = [xs, vals, prim, locate](const Vector& p) {
        const auto [k, s] = locate(p(0));
        const double d0 = vals[k](0) - vals[k](1);
        const double d1 = vals[k + 1](0) - vals[k + 1](1);
        const double w = xs[k + 1] - xs[k];
        return prim[k] + w * (s * d0 + 0.5 * s * s * (d1 - d0));
    };
    return out;
}

inline PayoffField build_payoff(const PayoffSpec& s, int n) {
    if (s.form == "quadratic_W") return quadratic_payoff(s.W, s.b);
    if (s.form == "custom_table") return table_payoff(s.x, s.values);
    return zero_payoff(n);
}

}  // namespace detail

inline MFGProblem build_problem(const ProblemSpec& p) {
    MarkovGraph g = build_graph(p);
    const double horizon = p.horizon.value_or(1.0);
    Vector p0 = p.p0.value_or(g.invariant());
    MFGProblem prob = make_problem(std::move(g), builtin(p.activation), make_power(p.alpha),
                                   detail::build_payoff(p.running, p.states), detail::build_payoff(p.terminal, p.states),
                                   p.t0, p.t0 + horizon, std::move(p0));
    if (p.terminal.pinned()) prob.pinned_terminal = p.terminal.density;
    validate_problem(prob);
    return prob;
}

}  // namespace mfgraph::io
