#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "almostsure/cli.hpp"
#include "almostsure/errors.hpp"

using namespace almostsure;
using namespace almostsure::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "almostsure_cli_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json small_td() {
    return json::parse(R"({
      "id": "small",
      "experiment": "td-markov",
      "mdp": {"generator": {"states": 4, "actions": 1, "gamma": 0.9, "seed": 3}},
      "features": "tabular",
      "schedule": "inv_poly:0.8:2",
      "seeds": [1, 2, 3],
      "horizon": 2000
    })");
}

std::string parse_error(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ParseError& e) {
        return e.what();
    }
    return "";
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ALMOSTSURE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, RoundTripsThroughJson) {
    for (const char* name : {"td_markov.json", "td_iid.json", "q_markov.json", "q_iid.json"}) {
        const auto config = load_config(fs::path(ALMOSTSURE_CONFIG_DIR) / name);
        const auto again = parse_config(to_json(config), config.base_dir);
        EXPECT_TRUE(config == again) << name;
        EXPECT_EQ(config.seeds.size(), 20U);
    }
}

TEST(Config, ExplicitMdpRoundTrip) {
    auto doc = small_td();
    doc["mdp"] = json::parse(R"({"gamma": 0.5, "reward": [[1], [0]], "transition": [[0.9, 0.1], [0.5, 0.5]]})");
    doc["features"] = json::parse("[[1, 0], [0, 1]]");
    doc["seeds"] = json::parse(R"(["0x10", "17", 18])");
    doc["checkpoints"] = json::parse("[0, 10, 2000]");
    doc["thresholds"] = json::parse(R"({"final_error_max": 0.2, "relative": false, "decay_factor_min": 3})");
    const auto config = parse_config(doc);
    EXPECT_EQ(config.seeds, (std::vector<std::uint64_t>{16, 17, 18}));
    EXPECT_EQ(config.thresholds.decay_factor_min, 3.0);
    EXPECT_TRUE(config == parse_config(to_json(config)));
}

TEST(Config, SeedRange) {
    auto doc = small_td();
    doc["seeds"] = json::parse(R"({"count": 4, "first": 10})");
    EXPECT_EQ(parse_config(doc).seeds, (std::vector<std::uint64_t>{10, 11, 12, 13}));
    doc["seeds"] = json::parse("[5]");
    EXPECT_NE(parse_error(doc).find("seeds"), std::string::npos);
}

TEST(Config, UnknownKeysNameTheirPath) {
    auto doc = small_td();
    doc["thresholds"] = json::parse(R"({"decay_factor": 3})");
    EXPECT_EQ(parse_error(doc), "thresholds.decay_factor: unknown key");
    doc = small_td();
    doc["colour"] = "blue";
    EXPECT_EQ(parse_error(doc), "colour: unknown key");
}

TEST(Config, FieldErrors) {
    auto doc = small_td();
    doc.erase("horizon");
    EXPECT_EQ(parse_error(doc), "horizon: required");

    doc = small_td();
    doc["schedule"] = "harmonic";
    EXPECT_EQ(parse_error(doc).rfind("schedule:", 0), 0U);

    doc = small_td();
    doc.erase("features");
    EXPECT_EQ(parse_error(doc), "features: required for TD experiments");

    doc = small_td();
    doc["experiment"] = "q-markov";
    EXPECT_EQ(parse_error(doc), "features: not used by Q-learning experiments");

    doc = small_td();
    doc["checkpoints"] = json::parse("[0, 5000]");
    EXPECT_NE(parse_error(doc).find("checkpoints[1]"), std::string::npos);

    doc = small_td();
    doc["mdp"]["generator"]["gamma"] = "high";
    EXPECT_EQ(parse_error(doc).rfind("mdp.generator.gamma", 0), 0U) << parse_error(doc);
}

TEST(Config, MissingFeatureFile) {
    auto doc = small_td();
    doc["features"] = json::parse(R"({"file": "does_not_exist.txt"})");
    EXPECT_NE(parse_error(doc).find("features.file"), std::string::npos);
}

TEST(Build, TdAndQExperiments) {
    const auto td = build_experiment(parse_config(small_td()));
    EXPECT_TRUE(std::holds_alternative<algorithms::LinearTdSpec>(td.problem));
    auto doc = small_td();
    doc["experiment"] = "q-iid";
    doc.erase("features");
    doc["mdp"]["generator"]["actions"] = 2;
    const auto q = build_experiment(parse_config(doc), 3);
    EXPECT_TRUE(std::holds_alternative<algorithms::QLearningSpec>(q.problem));
    EXPECT_EQ(q.jobs, 3U);
}

TEST(AnalyzeChain, TwoStateChain) {
    const auto matrix = scratch("two_state.txt");
    write_file(matrix, "2\n0.9 0.1\n0.5 0.5\n");
    const auto out = scratch("two_state.report");
    std::ostringstream err;
    ASSERT_EQ(cmd_analyze_chain(matrix, out, {}, err), 0) << err.str();
    const std::string text = read_file(out);
    EXPECT_NE(text.find("irreducible = true"), std::string::npos);
    EXPECT_NE(text.find("doeblin = Present"), std::string::npos);
    EXPECT_NE(text.find("epsilon = 0.59999999999999998"), std::string::npos) << text;
    EXPECT_NE(text.find("stationary = 0.83333333333"), std::string::npos) << text;
}

TEST(AnalyzeChain, PeriodicAndReducible) {
    const auto periodic = scratch("periodic.txt");
    write_file(periodic, "2\n0 1\n1 0\n");
    const auto out = scratch("periodic.report");
    std::ostringstream err;
    ASSERT_EQ(cmd_analyze_chain(periodic, out, {}, err), 0);
    std::string text = read_file(out);
    EXPECT_NE(text.find("aperiodic = false"), std::string::npos);
    EXPECT_NE(text.find("period = 2"), std::string::npos);
    EXPECT_NE(text.find("doeblin = Absent"), std::string::npos);

    const auto identity = scratch("identity.txt");
    write_file(identity, "2\n1 0\n0 1\n");
    ASSERT_EQ(cmd_analyze_chain(identity, out, {}, err), 0);
    text = read_file(out);
    EXPECT_NE(text.find("irreducible = false"), std::string::npos);
    EXPECT_NE(text.find("stationary = not unique"), std::string::npos);
}

TEST(AnalyzeChain, MalformedRowIsReported) {
    const auto bad = scratch("bad.txt");
    write_file(bad, "3\n0.5 0.5 0\n0.2 0.8\n1 0 0\n");
    std::ostringstream err;
    EXPECT_EQ(cmd_analyze_chain(bad, scratch("bad.report"), {}, err), 1);
    EXPECT_NE(err.str().find("line 3"), std::string::npos) << err.str();
}

TEST(Run, WritesTraceAndReport) {
    const auto config = scratch("small.json");
    write_file(config, small_td().dump());
    const auto dir = scratch("small_run");
    fs::remove_all(dir);
    std::ostringstream err;
    const int code = cmd_run(config, dir, {}, err);
    EXPECT_TRUE(code == 0 || code == 2 || code == 3) << err.str();
    const std::string trace = read_file(dir / "trace.csv");
    EXPECT_EQ(trace.substr(0, trace.find('\n')), "experiment_id,seed,step,error,phi");
    EXPECT_NE(read_file(dir / "report.txt").find("verdict = "), std::string::npos);

    const auto again = scratch("small_run_again");
    Flags parallel;
    parallel.jobs = 3;
    EXPECT_EQ(cmd_run(config, again, parallel, err), code);
    EXPECT_EQ(read_file(again / "trace.csv"), trace);
}

TEST(Run, SmallNuOnMarkovSamplingFails) {
    auto doc = small_td();
    doc["schedule"] = "inv_poly:0.6:2";
    const auto config = scratch("small_nu.json");
    write_file(config, doc.dump());
    std::ostringstream err;
    EXPECT_EQ(cmd_run(config, scratch("small_nu_run"), {}, err), 1);
    EXPECT_NE(err.str().find("(2/3, 1)"), std::string::npos) << err.str();
}

TEST(CheckAssumptions, ZeroFeaturesFail) {
    auto doc = small_td();
    doc["features"] = json::parse("[[0], [0], [0], [0]]");
    doc["validate_features"] = false;
    doc["tolerances"] = json::parse(R"({"anchors": 20, "mc_samples": 100, "lyapunov_samples": 200})");
    const auto config = scratch("zero_features.json");
    write_file(config, doc.dump());
    const auto out = scratch("zero_features.report");
    std::ostringstream err;
    EXPECT_EQ(cmd_check_assumptions(config, out, {}, err), 3) << err.str();
    EXPECT_NE(read_file(out).find("failure = drift"), std::string::npos);

    doc.erase("validate_features");
    write_file(config, doc.dump());
    EXPECT_EQ(cmd_check_assumptions(config, out, {}, err), 1);
}

TEST(RsDemo, PrintsEnvelope) {
    std::ostringstream out;
    EXPECT_EQ(cmd_rs_demo(1.0, 0.0, 3, out), 0);
    const std::string text = out.str();
    EXPECT_EQ(text.substr(0, 4), "n,z\n");
    EXPECT_NE(text.find("\n0,1\n"), std::string::npos);
    EXPECT_NE(text.find("\n3,0.25\n"), std::string::npos) << text;
}

TEST(Executable, ExitCodes) {
    const auto periodic = scratch("exe_periodic.txt");
    write_file(periodic, "2\n0 1\n1 0\n");
    EXPECT_EQ(run_cli("analyze-chain " + periodic.string()), 0);
    EXPECT_EQ(run_cli("analyze-chain " + scratch("missing.txt").string()), 1);
    EXPECT_EQ(run_cli("rs-demo --z0 1 --c 1 --steps 10"), 0);
    EXPECT_NE(run_cli("no-such-command"), 0);

    auto doc = small_td();
    doc["schedule"] = "inv_poly:0.6:2";
    const auto config = scratch("exe_small_nu.json");
    write_file(config, doc.dump());
    EXPECT_EQ(run_cli("run --config " + config.string() + " --out " + scratch("exe_out").string()), 1);
}
