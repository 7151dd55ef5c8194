#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfgraph/io/run.hpp"

using namespace mfgraph;
using namespace mfgraph::io;

namespace {

json two_state(const std::string& command) {
    return {{"command", command},
            {"problem",
             {{"states", 2},
              {"weights", {{0, 1}, {1, 0}}},
              {"pi", {0.5, 0.5}},
              {"activation", "log_mean"},
              {"horizon", 1.0},
              {"p0", {0.3, 0.7}}}},
            {"output", {{"stem", "case"}}}};
}

std::vector<std::string> issue_paths(const std::string& text) {
    try {
        parse_config(text);
    } catch (const SchemaError& e) {
        std::vector<std::string> out;
        for (const SchemaIssue& i : e.issues()) out.push_back(i.path);
        return out;
    }
    return {};
}

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

class RunDir : public ::testing::Test {
protected:
    std::filesystem::path dir;
    void SetUp() override {
        dir = std::filesystem::temp_directory_path() /
              ("mfgsolve_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::remove_all(dir);
    }
    void TearDown() override { std::filesystem::remove_all(dir); }

    int run(const json& cfg, std::string* log = nullptr) {
        RunOptions o;
        o.out_dir = dir.string();
        o.quiet = log == nullptr;
        std::ostringstream os;
        const int code = run_text(cfg.dump(), o, os);
        if (log) *log = os.str();
        return code;
    }
    json read(const std::string& name) const {
        std::ifstream f(dir / name);
        return json::parse(f);
    }
    std::string bytes(const std::string& name) const {
        std::ifstream f(dir / name, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    }
};

}  // namespace

TEST(ParseConfig, MinimalFlowParses) {
    json cfg = two_state("flow");
    cfg["problem"].erase("horizon");
    const RunConfig rc = parse_config(cfg.dump());
    EXPECT_EQ(rc.command, "flow");
    EXPECT_EQ(rc.problem.states, 2);
    EXPECT_EQ(rc.numerics.flow_form, "onsager");
    EXPECT_FALSE(rc.problem.horizon.has_value());
}

TEST(ParseConfig, MissingHorizonIsReportedByPointer) {
    json cfg = two_state("mfg");
    cfg["problem"].erase("horizon");
    EXPECT_TRUE(has(issue_paths(cfg.dump()), "/problem/horizon"));
}

TEST(ParseConfig, ConvexNeedsPotential) {
    json cfg = two_state("mfg");
    cfg["problem"]["running"] = {{"form", "quadratic_W"}, {"W", {{-1, 0.8}, {-0.4, -1}}}};
    cfg["numerics"] = {{"method", "convex"}};
    try {
        parse_config(cfg.dump());
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        ASSERT_EQ(e.issues().size(), 1u);
        EXPECT_EQ(e.issues()[0].path, "/numerics/method");
        EXPECT_EQ(e.issues()[0].message, "convex solver requires potential structure");
    }
    cfg["numerics"]["method"] = "fixed_point";
    EXPECT_NO_THROW(parse_config(cfg.dump()));
}

TEST(ParseConfig, CollectsEveryIssue) {
    json cfg = two_state("master");
    cfg["problem"]["states"] = 3;
    cfg["problem"]["p0"] = {0.5, 0.6};
    cfg["numerics"] = {{"n_t", -4}, {"tol", "small"}, {"delta", 0.7}};
    const auto paths = issue_paths(cfg.dump());
    for (const char* p : {"/problem/states", "/problem/weights", "/problem/p0", "/numerics/n_t", "/numerics/tol",
                          "/numerics/delta"})
        EXPECT_TRUE(has(paths, p)) << p;
    EXPECT_TRUE(has(issue_paths("{\"command\": \"fly\"}"), "/command"));
    EXPECT_TRUE(has(issue_paths("not json"), ""));
}

TEST(ParseConfig, TablePayoffHasMatchingPotential) {
    json cfg = two_state("twopoint");
    cfg["problem"]["terminal"] = {
        {"form", "custom_table"}, {"x", {0.0, 0.4, 1.0}}, {"values", {{1.0, 0.2}, {0.0, 0.5}, {-1.0, 0.0}}}};
    const RunConfig rc = parse_config(cfg.dump());
    const MFGProblem prob = build_problem(rc.problem);
    EXPECT_TRUE(prob.terminal.has_potential());
    EXPECT_LE(potential_mismatch(prob.terminal, 2), 1e-6);
    Vector p(2);
    p << 0.2, 0.8;
    EXPECT_NEAR(prob.terminal.field(p)(0), 0.5, 1e-15);
    EXPECT_NEAR(prob.terminal.field(p)(1), 0.35, 1e-15);
}

TEST_F(RunDir, ValidatePrintsMeasureAndWeights) {
    json cfg = {{"command", "validate"},
                {"problem", {{"states", 2}, {"q_matrix", {{-0.2, 0.2}, {0.6, -0.6}}}}},
                {"output", {{"stem", "v"}}}};
    std::string log;
    EXPECT_EQ(run(cfg, &log), exit_ok);
    EXPECT_NE(log.find("pi:"), std::string::npos);
    EXPECT_NE(log.find("omega:"), std::string::npos);
    const json s = read("v.summary.json");
    EXPECT_NEAR(s["results"]["pi"][0].get<double>(), 0.75, 1e-14);
    EXPECT_NEAR(s["results"]["omega"][0][1].get<double>(), 0.15, 1e-14);
}

TEST_F(RunDir, WassersteinClosedForm) {
    json cfg = two_state("wasserstein");
    cfg["problem"]["activation"] = "quadratic";
    cfg["problem"]["p0"] = {0.2, 0.8};
    cfg["problem"]["terminal"] = {{"form", "pinned"}, {"density", {0.8, 0.2}}};
    EXPECT_EQ(run(cfg), exit_ok);
    EXPECT_NEAR(read("case.summary.json")["results"]["W"].get<double>(), 0.6, 1e-9);
}

TEST_F(RunDir, NonConvergenceWritesOutputsAndExitsThree) {
    json cfg = two_state("mfg");
    cfg["problem"]["running"] = {{"form", "quadratic_W"}, {"W", {{-1, 0}, {0, -1}}}};
    cfg["problem"]["horizon"] = 6.0;
    cfg["problem"]["p0"] = {0.2, 0.8};
    cfg["numerics"] = {{"n_t", 64}, {"method", "fixed_point"}, {"max_iterations", 50}};
    EXPECT_EQ(run(cfg), exit_nonconvergence);
    const json s = read("case.summary.json");
    EXPECT_EQ(s["status"], "not_converged");
    EXPECT_FALSE(s["results"]["converged"].get<bool>());
    EXPECT_TRUE(s["results"].contains("residual"));
    EXPECT_EQ(read("case.error.json")["exit_code"], 3);
    EXPECT_TRUE(std::filesystem::exists(dir / "case.csv"));
}

TEST_F(RunDir, ExitCodes) {
    json cfg = two_state("mfg");
    cfg["problem"].erase("horizon");
    EXPECT_EQ(run(cfg), exit_config);
    EXPECT_EQ(read("case.error.json")["error"]["type"], "SchemaError");

    // Detailed balance fails: an input error detected while assembling the graph.
    json bad = {{"command", "validate"},
                {"problem", {{"states", 3}, {"q_matrix", {{-1, 1, 0}, {0, -1, 1}, {1, 0, -1}}}}},
                {"output", {{"stem", "case"}}}};
    EXPECT_EQ(run(bad), exit_config);

    // Out of domain at solve time: planning with a boundary endpoint.
    json tp = two_state("twopoint");
    tp["problem"]["p0"] = {0.0, 1.0};
    tp["problem"]["terminal"] = {{"form", "pinned"}, {"density", {0.5, 0.5}}};
    EXPECT_EQ(run(tp), exit_domain);
    EXPECT_EQ(read("case.error.json")["error"]["type"], "OutOfDomain");
}

TEST_F(RunDir, CsvIsDeterministic) {
    json cfg = two_state("mfg");
    cfg["problem"]["running"] = {{"form", "quadratic_W"}, {"W", {{-1, 0}, {0, -1}}}};
    cfg["numerics"] = {{"n_t", 32}};
    ASSERT_EQ(run(cfg), exit_ok);
    const std::string first = bytes("case.csv");
    ASSERT_EQ(run(cfg), exit_ok);
    EXPECT_EQ(first, bytes("case.csv"));
    std::istringstream lines(first);
    std::string header;
    std::getline(lines, header);
    EXPECT_EQ(header, "t,p_1,p_2,phi_1,phi_2,hamiltonian");
}

TEST_F(RunDir, MasterGridAndThreads) {
    json cfg = two_state("master");
    cfg["problem"]["running"] = {{"form", "quadratic_W"}, {"W", {{-1, 0}, {0, -1}}}};
    cfg["problem"]["terminal"] = {{"form", "quadratic_W"}, {"W", {{-2, 0}, {0, 0}}}, {"b", {1, 0}}};
    cfg["numerics"] = {{"nx", 6}, {"nt", 4}};
    ASSERT_EQ(run(cfg), exit_ok);
    const std::string one = bytes("case.csv");
    const json s = read("case.summary.json");
    EXPECT_TRUE(s["results"]["failures"].empty());
    RunOptions o;
    o.out_dir = dir.string();
    o.quiet = true;
    o.threads = 3;
    std::ostringstream os;
    ASSERT_EQ(run_text(cfg.dump(), o, os), exit_ok);
    EXPECT_EQ(one, bytes("case.csv"));
}
