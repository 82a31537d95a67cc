#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "helpers.hpp"
#include "npmix/cli.hpp"
#include "npmix/io.hpp"
#include "npmix/simgen.hpp"

using namespace npmix;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "npmix");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

std::string tiny_data(const std::string& dir, std::uint64_t seed) {
    const Scenario sc = build_scenario(scenario_preset("tiny"));
    const Sample s = sample(sc, seed);
    std::ostringstream o;
    write_csv(o, s.data);
    const std::string path = dir + "/data.csv";
    write(path, o.str());
    return path;
}

}  // namespace

TEST_CASE("fit writes a model that round-trips") {
    const std::string dir = testing::temp_dir("cli_fit");
    write(dir + "/min.csv", "z,a,b\n0,1.5,-0.5\n1,-0.5,2.0\n");
    write(dir + "/cfg.json", R"({"em": {"K": 1, "lambda": 1000, "restarts": 1}})");
    const Run r = cli({"fit", dir + "/min.csv", "--config", dir + "/cfg.json", "--out", dir + "/out"});
    REQUIRE(r.code == kExitOk);
    const StoredModel m = load_model(dir + "/out/model.json");
    for (const auto& t : m.params.theta[0]) CHECK(t(0, 1) == 0.0);
    const std::string text = slurp(dir + "/out/model.json");
    CHECK(dump_model(m) == text);
    CHECK(slurp(dir + "/out/trace.csv").rfind("# schema_version: 1\ngrid_index,z,iteration,objective\n", 0) == 0);
}

TEST_CASE("fit input errors") {
    const std::string dir = testing::temp_dir("cli_errors");
    write(dir + "/noz.csv", "a,b\n1,2\n3,4\n");
    const Run r = cli({"fit", dir + "/noz.csv", "--out", dir});
    CHECK(r.code == kExitBadInput);
    CHECK(r.err.find("'z'") != std::string::npos);

    write(dir + "/bad.csv", "z,a\n0,1\n1,x\n");
    const Run b = cli({"fit", dir + "/bad.csv", "--out", dir});
    CHECK(b.code == kExitBadInput);
    CHECK(b.err.find("line 3") != std::string::npos);

    write(dir + "/ok.csv", "z,a\n0,1\n1,2\n0.5,0.3\n");
    write(dir + "/unknown.json", R"({"em": {"K": 1, "penalty": 2}})");
    CHECK(cli({"fit", dir + "/ok.csv", "--config", dir + "/unknown.json", "--out", dir}).code == kExitBadInput);
    write(dir + "/narrow.json", R"({"kernel": {"bandwidth": 0.001}, "grid": {"points": [0.2, 0.3]}})");
    CHECK(cli({"fit", dir + "/ok.csv", "--config", dir + "/narrow.json", "--out", dir}).code == kExitBadGrid);
    CHECK(cli({"fit"}).code == kExitBadInput);
    CHECK(cli({"frobnicate"}).code == kExitBadInput);
    CHECK(cli({"fit", dir + "/ok.csv", "--threads", "0"}).code == kExitBadInput);
}

TEST_CASE("refit from a saved model does not lose objective") {
    const std::string dir = testing::temp_dir("cli_warm");
    const std::string data = tiny_data(dir, 3);
    write(dir + "/cfg.json", R"({"kernel": {"bandwidth": 0.8}, "grid": {"count": 5}, "em": {"K": 2, "lambda": 0.05, "restarts": 2}})");
    REQUIRE(cli({"fit", data, "--config", dir + "/cfg.json", "--out", dir + "/a"}).code == kExitOk);
    REQUIRE(cli({"fit", data, "--config", dir + "/cfg.json", "--init", dir + "/a/model.json", "--out", dir + "/b"}).code == kExitOk);
    const StoredModel a = load_model(dir + "/a/model.json");
    const StoredModel b = load_model(dir + "/b/model.json");
    CHECK(b.mean_objective >= a.mean_objective - 1e-9);
}

TEST_CASE("select") {
    const std::string dir = testing::temp_dir("cli_select");
    const std::string data = tiny_data(dir, 4);
    write(dir + "/grid.json", R"({"grid": {"count": 5}, "em": {"restarts": 2},
        "selection": {"K_values": [1, 2], "lambda_values": [0.02, 0.2], "h_values": [0.5, 1.0], "cv_folds": 3}})");
    const Run r = cli({"select", data, "--config", dir + "/grid.json", "--out", dir + "/out"});
    REQUIRE(r.code == kExitOk);
    const std::string sel = slurp(dir + "/out/selection.csv");
    CHECK(std::count(sel.begin(), sel.end(), '\n') == 2 + 8);
    CHECK(fs::exists(dir + "/out/model.json"));
    const auto chosen = nlohmann::json::parse(slurp(dir + "/out/chosen.json"));
    CHECK(chosen["schema_version"] == 1);

    write(dir + "/one.json", R"({"grid": {"count": 5}, "em": {"restarts": 1},
        "selection": {"K_values": [2], "lambda_values": [0.05], "h_values": [0.7]}})");
    const Run one = cli({"select", data, "--config", dir + "/one.json", "--out", dir + "/one"});
    REQUIRE(one.code == kExitOk);
    const auto c1 = nlohmann::json::parse(slurp(dir + "/one/chosen.json"));
    CHECK(c1["K"] == 2);
    CHECK(c1["h"] == 0.7);

    write(dir + "/empty.json", R"({"selection": {"K_values": [], "lambda_values": [0.05], "h_values": [0.7]}})");
    CHECK(cli({"select", data, "--config", dir + "/empty.json", "--out", dir}).code == kExitBadGrid);
    write(dir + "/broken.json", R"({"selection": {"K_values": [1], "lambda_values": [0.05)");
    CHECK(cli({"select", data, "--config", dir + "/broken.json", "--out", dir}).code == kExitBadInput);
    CHECK(cli({"select", data, "--out", dir}).code == kExitBadInput);
}

TEST_CASE("simulate and eval") {
    const std::string dir = testing::temp_dir("cli_sim");
    write(dir + "/sim.json", R"({"em": {"restarts": 1},
        "selection": {"K_values": [1, 2], "lambda_values": [0.05, 0.1], "h_values": [0.6, 1.0]}})");
    const Run r = cli({"simulate", "--preset", "tiny", "--replications", "1", "--config", dir + "/sim.json", "--out", dir + "/one"});
    REQUIRE(r.code == kExitOk);
    const std::string agg = slurp(dir + "/one/aggregate.csv");
    CHECK(agg.rfind("# schema_version: 1\nh,metric,mean,se\n", 0) == 0);
    std::istringstream lines(agg);
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("h,", 0) == 0) continue;
        ++rows;
        CHECK(line.back() == ',');  // se empty with one replication
    }
    CHECK(rows > 0);
    CHECK(fs::exists(dir + "/one/data/rep_000.csv"));

    const Run three = cli({"simulate", "--preset", "tiny", "--replications", "3", "--config", dir + "/sim.json", "--no-data",
                           "--out", dir + "/three"});
    REQUIRE(three.code == kExitOk);
    CHECK_FALSE(fs::exists(dir + "/three/data"));
    std::istringstream freq(slurp(dir + "/three/frequencies.csv"));
    while (std::getline(freq, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("rule", 0) == 0) continue;
        int total = 0;
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');
        while (std::getline(cells, cell, ',')) total += std::stoi(cell);
        CHECK(total == 3);
    }

    CHECK(cli({"simulate", "--preset", "nope", "--out", dir}).code == kExitBadInput);
    write(dir + "/bad_scenario.json", R"({"scenario": {"preset": "tiny", "p": 0}})");
    CHECK(cli({"simulate", "--config", dir + "/bad_scenario.json", "--out", dir}).code == kExitBadInput);

    // eval: truth itself, a permuted copy, and a dense model
    const Scenario sc = build_scenario(scenario_preset("tiny"));
    StoredModel truth;
    truth.params = sc.truth;
    save_model(dir + "/truth.json", truth);
    REQUIRE(cli({"eval", dir + "/truth.json", "--preset", "tiny", "--out", dir + "/e1"}).code == kExitOk);
    auto rep = nlohmann::json::parse(slurp(dir + "/e1/report.json"));
    CHECK(rep["afl"] == 0.0);
    CHECK(rep["asl"] == 0.0);
    CHECK(rep["rase_pi"] == 0.0);

    StoredModel swapped = truth;
    std::swap(swapped.params.theta[0], swapped.params.theta[1]);
    std::swap(swapped.params.mu[0], swapped.params.mu[1]);
    swapped.params.pi.row(0).swap(swapped.params.pi.row(1));
    save_model(dir + "/swapped.json", swapped);
    REQUIRE(cli({"eval", dir + "/swapped.json", "--preset", "tiny", "--out", dir + "/e2"}).code == kExitOk);
    rep = nlohmann::json::parse(slurp(dir + "/e2/report.json"));
    CHECK(rep["afl"] == 0.0);
    CHECK(rep["alignment"] == nlohmann::json::array({1, 0}));

    StoredModel dense = truth;
    for (auto& row : dense.params.theta)
        for (auto& t : row) t += Matrix::Constant(3, 3, 1e-3);
    save_model(dir + "/dense.json", dense);
    REQUIRE(cli({"eval", dir + "/dense.json", "--preset", "tiny", "--out", dir + "/e3"}).code == kExitOk);
    rep = nlohmann::json::parse(slurp(dir + "/e3/report.json"));
    CHECK(rep["afpr"] == 1.0);
}

TEST_CASE("thread count does not change outputs") {
    const std::string dir = testing::temp_dir("cli_threads");
    const std::string data = tiny_data(dir, 6);
    write(dir + "/cfg.json", R"({"grid": {"count": 5}, "em": {"K": 2, "lambda": 0.05, "restarts": 3},
        "selection": {"K_values": [1, 2], "lambda_values": [0.02, 0.2], "h_values": [0.5, 1.0], "cv_folds": 3}})");
    for (const char* t : {"1", "3"}) {
        const std::string o = dir + "/t" + t;
        REQUIRE(cli({"fit", data, "--config", dir + "/cfg.json", "--threads", t, "--seed", "5", "--out", o + "/fit"}).code == kExitOk);
        REQUIRE(cli({"select", data, "--config", dir + "/cfg.json", "--threads", t, "--seed", "5", "--out", o + "/select"}).code == kExitOk);
        REQUIRE(cli({"simulate", "--preset", "tiny", "--replications", "2", "--config", dir + "/cfg.json", "--threads", t,
                     "--seed", "5", "--out", o + "/sim"}).code == kExitOk);
    }
    for (const auto& entry : fs::recursive_directory_iterator(dir + "/t1")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir + "/t1");
        CHECK_MESSAGE(slurp(entry.path().string()) == slurp((fs::path(dir + "/t3") / rel).string()), rel.string());
    }
}
