#include "doctest.h"

#include <fstream>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "npmix/io.hpp"

using namespace npmix;

namespace {

Dataset parse(const std::string& text) {
    std::istringstream in(text);
    return parse_csv(in, "test.csv");
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const InvalidInput& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("format_double round trips") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double x = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("CSV parsing") {
    const Dataset d = parse("# comment\nx1,z,x2\n1,0.5,2\n3, 0.25 ,4\n\n");
    CHECK(d.size() == 2);
    CHECK(d.dim() == 2);
    CHECK(d.z(0) == 0.5);
    CHECK(d.z(1) == 0.25);
    CHECK(d.x(1, 0) == 3);
    CHECK(d.x(1, 1) == 4);

    CHECK(error_of("x1,x2\n1,2\n3,4\n").find("'z'") != std::string::npos);
    const std::string bad = error_of("z,x1\n0,1\n0,abc\n");
    CHECK(bad.find("line 3") != std::string::npos);
    CHECK(bad.find("x1") != std::string::npos);
    CHECK(error_of("z,x1\n0,1\n0,1,2\n").find("line 3") != std::string::npos);
    CHECK(error_of("z,x1\n0,1\n0,nan\n").find("not a finite number") != std::string::npos);
    CHECK(error_of("").find("header") != std::string::npos);
    CHECK(error_of("z\n0\n1\n").find("variable") != std::string::npos);
    CHECK_FALSE(error_of("z,x1\n0,1\n").empty());  // one observation
}

TEST_CASE("CSV write then read") {
    Rng rng(2);
    Dataset d;
    d.x.resize(5, 3);
    d.z.resize(5);
    for (Index i = 0; i < 5; ++i) {
        d.z(i) = rng.uniform();
        for (Index j = 0; j < 3; ++j) d.x(i, j) = rng.normal();
    }
    std::ostringstream out;
    std::vector<int> labels{0, 1, 1, 0, 1};
    write_csv(out, d, nullptr);
    const Dataset back = parse(out.str());
    CHECK(back.x == d.x);
    CHECK(back.z == d.z);

    std::ostringstream with;
    write_csv(with, d, &labels);
    CHECK(with.str().substr(0, 15) == "z,x1,x2,x3,labe");
}

TEST_CASE("model JSON round trip is byte identical") {
    StoredModel m;
    m.params = MixtureParams::zeros(2, GridSpec::uniform(0, 1, 3), 2);
    Rng rng(4);
    for (Index k = 0; k < 2; ++k)
        for (Index g = 0; g < 3; ++g) {
            m.params.pi(k, g) = k == 0 ? 0.3 + 0.1 * static_cast<double>(g) : 0.7 - 0.1 * static_cast<double>(g);
            m.params.mu[k][g] = Vector::Constant(2, rng.normal());
            m.params.theta[k][g] = testing::random_spd(2, rng);
        }
    m.kernel = {KernelFamily::Gaussian, 0.65};
    m.lambda = 0.013;
    m.seed = 18446744073709551557ULL;
    m.converged = true;
    m.iterations = 12;
    m.mean_objective = -3.25;
    m.responsibilities = Matrix::Constant(2, 4, 0.5);
    m.objective_trace = {{-4, -3.5}, {-4.1, -3.4}, {-2, -1}};
    const std::string a = dump_model(m);
    const StoredModel back = model_from_json(nlohmann::ordered_json::parse(a));
    CHECK(dump_model(back) == a);
    CHECK(back.params.theta[1][2] == m.params.theta[1][2]);
    CHECK(back.seed == m.seed);
    CHECK(back.kernel.family == KernelFamily::Gaussian);

    auto j = nlohmann::ordered_json::parse(a);
    j["schema_version"] = 99;
    CHECK_THROWS_AS(model_from_json(j), InvalidInput);
    j = nlohmann::ordered_json::parse(a);
    j["components"][0]["theta"][1] = {1, 2, 3};
    CHECK_THROWS_AS(model_from_json(j), InvalidInput);
    j = nlohmann::ordered_json::parse(a);
    j.erase("pi");
    CHECK_THROWS_AS(model_from_json(j), InvalidInput);
}

TEST_CASE("config parsing") {
    const auto rc = parse_config(nlohmann::json::parse(R"({
        "kernel": {"family": "gaussian", "bandwidth": 0.7},
        "grid": {"lo": 0, "hi": 1, "count": 6},
        "em": {"K": 2, "lambda": 0.05, "restarts": 3, "seed": 9},
        "selection": {"K_values": [1, 2], "lambda_values": [0.01, 0.1], "h_values": [0.5]},
        "scenario": {"preset": "tiny", "n_per_point": 30},
        "simulate": {"replications": 4}
    })"));
    REQUIRE(rc.kernel);
    CHECK(rc.kernel->family == KernelFamily::Gaussian);
    REQUIRE(rc.grid);
    CHECK(rc.grid->size() == 6);
    REQUIRE(rc.em);
    CHECK(rc.em->K == 2);
    CHECK(rc.em->seed == 9);
    REQUIRE(rc.selection);
    CHECK(rc.selection->h_values.size() == 1);
    REQUIRE(rc.scenario);
    CHECK(rc.scenario->n_per_point == 30);
    CHECK(rc.scenario->p == 3);
    CHECK(rc.replications == 4);

    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"em": {"K": 2, "lamda": 0.1}})")), InvalidInput);
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"extra": 1})")), InvalidInput);
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"em": {"K": "two"}})")), InvalidInput);
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"selection": {"K_values": [], "lambda_values": [0.1], "h_values": [1]}})")), EmptyGrid);
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"grid": {"points": []}})")), EmptyGrid);
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"grid": {"points": [0, 1], "count": 3}})")), InvalidInput);
}

TEST_CASE("config files allow comments and report parse errors") {
    const std::string dir = testing::temp_dir("config");
    {
        std::ofstream f(dir + "/ok.json");
        f << "{\n  // penalty\n  \"em\": {\"lambda\": 0.2}\n}\n";
    }
    CHECK(load_config(dir + "/ok.json").em->lambda == 0.2);
    {
        std::ofstream f(dir + "/bad.json");
        f << "{\"em\": {\"lambda\": }";
    }
    CHECK_THROWS_AS(load_config(dir + "/bad.json"), InvalidInput);
    CHECK_THROWS_AS(load_config(dir + "/missing.json"), InvalidInput);
}

TEST_CASE("scenario JSON") {
    const ScenarioSpec s = scenario_preset("desk_ar_sparse");
    const auto j = scenario_to_json(s);
    const ScenarioSpec back = scenario_from_json(nlohmann::json::parse(j.dump()));
    CHECK(scenario_to_json(back).dump() == j.dump());
    CHECK_THROWS_AS(scenario_from_json(nlohmann::json::parse(R"({"preset": "tiny", "components": [{"shape": "ar1"}]})")),
                    InvalidInput);
}
