#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fracrec/cli.hpp"

using namespace fracrec;
namespace fs = std::filesystem;
using doctest::Approx;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("fracrec_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run_with_args(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"fracrec"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::main_entry(int(argv.size()), argv.data());
}

const char* kConstSpec = R"({"gamma": {"family": "constant", "matrix": [[1,0],[0,1]]}})";

} // namespace

TEST_CASE("config parsing is strict about keys at every level") {
    CHECK_THROWS_AS(cli::parse_config(R"({"task":"constants","s":0.5,"bogus":1})"),
                    cli::ConfigError);
    CHECK_THROWS_AS(
        cli::parse_config(R"({"task":"constants","s":0.5,"grid":{"nz":48}})"),
        cli::ConfigError);
    CHECK_THROWS_AS(
        cli::parse_config(
            R"({"task":"probe","s":0.5,"field":{"gamma":{"family":"constant","matrix":[[1,0],[0,1]],"extra":3}}})"),
        cli::ConfigError);
    CHECK_THROWS_AS(
        cli::parse_config(R"({"task":"constants","s":0.5,"output":{"folder":"x"}})"),
        cli::ConfigError);
}

TEST_CASE("config parsing reports the offending key") {
    try {
        cli::parse_config(R"({"task":"constants","s":0.5,"probe":{"omega":3}})");
        FAIL("expected rejection");
    } catch (const cli::ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("omega") != std::string::npos);
        CHECK(msg.find("probe") != std::string::npos);
    }
}

TEST_CASE("config validation covers ranges and required sections") {
    CHECK_THROWS_AS(cli::parse_config(R"({"task":"constants"})"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config(R"({"task":"constants","s":1.5})"),
                    cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config(R"({"task":"constants","s":0.0})"),
                    cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config(R"({"task":"dance","s":0.5})"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config(R"({"task":"probe","s":0.5})"), cli::ConfigError);
    CHECK_THROWS_AS(
        cli::parse_config(R"({"task":"constants","s":0.5,"schedule":[32,16,64]})"),
        cli::ConfigError);
    CHECK_THROWS_AS(
        cli::parse_config(
            R"({"task":"stability","s":0.5,"field":{"gamma":{"family":"constant","matrix":[[1,0],[0,1]]}}})"),
        cli::ConfigError);
    CHECK_NOTHROW(cli::parse_config(R"({"task":"constants","s":0.5})"));
}

TEST_CASE("config round-trips through its canonical serialization") {
    std::string text = R"({
        "task": "probe",
        "s": 0.375,
        "seed": 11,
        "field": {"gamma": {"family": "constant", "matrix": [[2.0, 0.25], [0.25, 1.0]]}},
        "cutoff": {"kind": "radial_bump", "epsilon": 0.1},
        "probe": {"alpha": [1, 0], "mode": "dtn", "backend": "fast"},
        "schedule": [16, 32, 64],
        "output": {"dir": "out", "svg": true}
    })";
    cli::RunConfig c1 = cli::parse_config(text);
    std::string canon = cli::serialize_config(c1);
    cli::RunConfig c2 = cli::parse_config(canon);
    CHECK(cli::serialize_config(c2) == canon);
    CHECK(c2.task == c1.task);
    CHECK(c2.s_value == c1.s_value);
    CHECK(c2.schedule == c1.schedule);
}

TEST_CASE("constants task emits the closed-form table deterministically") {
    fs::path dir = fresh_dir("constants");
    fs::path cfg = dir / "cfg.json";
    cli::write_file(cfg, R"({"task":"constants","s":0.5,"output":{"dir":")" +
                             (dir / "out").string() + R"("}})");
    REQUIRE(run_with_args({cfg.string()}) == 0);
    std::string js = slurp(dir / "out" / "constants.json");
    auto j = nlohmann::json::parse(js);
    CHECK(j["c_s"].get<double>() == Approx(-1.0).epsilon(1e-12));
    CHECK(j["c_hat_s"].get<double>() == Approx(std::sqrt(M_PI / 2.0)).epsilon(1e-11));
    CHECK(j["c1"].get<double>() == Approx(M_PI / 4.0).epsilon(1e-8));
    CHECK(j["c_sum_closed_form"].get<double>() == Approx(M_PI / 2.0).epsilon(1e-11));
    std::string csv = slurp(dir / "out" / "constants.csv");
    CHECK(csv.rfind("name,value\r\n", 0) == 0);
    // byte-stable on re-run
    std::string js2 = slurp(dir / "out" / "constants.json");
    REQUIRE(run_with_args({cfg.string()}) == 0);
    CHECK(slurp(dir / "out" / "constants.json") == js);
    CHECK(slurp(dir / "out" / "constants.csv") == csv);
    fs::remove_all(dir);
}

TEST_CASE("probe task writes series tables and a convergence plot") {
    fs::path dir = fresh_dir("probe");
    fs::path out = dir / "out";
    nlohmann::json cfg{
        {"task", "probe"},
        {"s", 0.5},
        {"field", nlohmann::json::parse(kConstSpec)},
        {"schedule", {16, 32, 64}},
        {"output", {{"dir", out.string()}, {"svg", true}}},
    };
    fs::path cfgp = dir / "cfg.json";
    cli::write_file(cfgp, cfg.dump());
    REQUIRE(run_with_args({cfgp.string()}) == 0);

    auto j = nlohmann::json::parse(slurp(out / "probe.json"));
    const double target = M_PI / 2.0;  // (c1+c2) for the identity at s = 1/2
    CHECK(j["fit"]["limit"].get<double>() == Approx(target).epsilon(0.02));
    CHECK(j["target"].get<double>() == Approx(target).epsilon(1e-10));
    CHECK(j["schedule"].size() == 3);

    std::string csv = slurp(out / "probe.csv");
    CHECK(csv.rfind("direction,N,raw,scaled,fit\r\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows

    std::string svg = slurp(out / "probe.svg");
    CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\"") !=
          std::string::npos);
    CHECK(svg.find("N^(-1/2)") != std::string::npos);
    CHECK(svg.find("scaled pairing") != std::string::npos);
    CHECK(svg.find("class=\"intercept\"") != std::string::npos);
    CHECK(svg.find("class=\"fit\"") != std::string::npos);
    CHECK(svg.find("class=\"target\"") != std::string::npos);
    CHECK(svg.find("limit " + cli::fmt12(j["fit"]["limit"].get<double>())) !=
          std::string::npos);
    // three data markers, one per schedule entry
    std::size_t markers = 0, pos = 0;
    while ((pos = svg.find("class=\"data\"", pos)) != std::string::npos) {
        ++markers;
        ++pos;
    }
    CHECK(markers == 3);

    // determinism across a second run
    REQUIRE(run_with_args({cfgp.string()}) == 0);
    CHECK(slurp(out / "probe.svg") == svg);
    CHECK(slurp(out / "probe.csv") == csv);
    fs::remove_all(dir);
}

TEST_CASE("reconstruct task recovers a diagonal anisotropy through the artifacts") {
    fs::path dir = fresh_dir("reconstruct");
    fs::path out = dir / "out";
    nlohmann::json cfg{
        {"task", "reconstruct"},
        {"s", 0.5},
        {"field",
         {{"gamma", {{"family", "constant"}, {"matrix", {{4.0, 0.0}, {0.0, 1.0}}}}}}},
        {"schedule", {64, 128, 256}},
        {"output", {{"dir", out.string()}}},
    };
    fs::path cfgp = dir / "cfg.json";
    cli::write_file(cfgp, cfg.dump());
    REQUIRE(run_with_args({cfgp.string()}) == 0);
    auto j = nlohmann::json::parse(slurp(out / "reconstruct.json"));
    double want[2][2] = {{4.0, 0.0}, {0.0, 1.0}};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            CHECK(std::fabs(j["matrix"][a][b].get<double>() - want[a][b]) <=
                  0.05 * std::max(1.0, want[a][b]));
    CHECK(j["warning"].get<std::string>().empty());
    std::string csv = slurp(out / "reconstruct.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);  // header + 3 dirs x 3 rows
    fs::remove_all(dir);
}

TEST_CASE("stability task with an empty probe set writes valid empty tables") {
    fs::path dir = fresh_dir("stability_empty");
    fs::path out = dir / "out";
    nlohmann::json cfg{
        {"task", "stability"},
        {"s", 0.5},
        {"field", nlohmann::json::parse(kConstSpec)},
        {"field2", nlohmann::json::parse(kConstSpec)},
        {"probes", nlohmann::json::array()},
        {"output", {{"dir", out.string()}}},
    };
    fs::path cfgp = dir / "cfg.json";
    cli::write_file(cfgp, cfg.dump());
    REQUIRE(run_with_args({cfgp.string()}) == 0);
    std::string csv = slurp(out / "stability.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1);  // header only
    auto j = nlohmann::json::parse(slurp(out / "stability.json"));
    CHECK(j["entries"].empty());
    fs::remove_all(dir);
}

TEST_CASE("stability task reports the empirical constant for a scaled field") {
    fs::path dir = fresh_dir("stability");
    fs::path out = dir / "out";
    nlohmann::json cfg{
        {"task", "stability"},
        {"s", 0.5},
        {"field", nlohmann::json::parse(kConstSpec)},
        {"field2",
         {{"gamma", {{"family", "constant"}, {"matrix", {{1.1, 0.0}, {0.0, 1.1}}}}}}},
        {"probes", {{{"x0", {0, 0}}, {"alpha", {1, 0}}}}},
        {"schedule", {16, 32, 64}},
        {"output", {{"dir", out.string()}}},
    };
    fs::path cfgp = dir / "cfg.json";
    cli::write_file(cfgp, cfg.dump());
    REQUIRE(run_with_args({cfgp.string()}) == 0);
    auto j = nlohmann::json::parse(slurp(out / "stability.json"));
    CHECK(j["field_diff"].get<double>() == Approx(0.1).epsilon(1e-9));
    CHECK(j["gap_proxy"].get<double>() > 0.0);
    CHECK(j["ratio"].get<double>() > 0.0);
    CHECK(j["entries"].size() == 3);
    fs::remove_all(dir);
}

TEST_CASE("command line maps failure classes to documented exit codes") {
    fs::path dir = fresh_dir("exitcodes");
    // missing config path
    CHECK(run_with_args({}) == 2);
    // unreadable config file
    CHECK(run_with_args({(dir / "nope.json").string()}) == 2);
    // config error in the file
    fs::path bad = dir / "bad.json";
    cli::write_file(bad, R"({"task":"constants","s":0.5,"mystery":1})");
    CHECK(run_with_args({bad.string()}) == 2);
    // unknown flag and unknown task override
    fs::path ok = dir / "ok.json";
    cli::write_file(ok, R"({"task":"constants","s":0.5})");
    CHECK(run_with_args({ok.string(), "--frobnicate"}) == 2);
    CHECK(run_with_args({ok.string(), "--task", "dance"}) == 2);
    CHECK(run_with_args({ok.string(), "--threads", "0"}) == 2);
    CHECK(run_with_args({ok.string(), "--threads", "zippy"}) == 2);
    // unwritable output directory is a runtime failure, not a config failure
    cli::write_file(ok, R"({"task":"constants","s":0.5,"output":{"dir":"/proc/fracrec_no"}})");
    CHECK(run_with_args({ok.string()}) == 3);
    fs::remove_all(dir);
}

TEST_CASE("the out and threads flags are honored") {
    fs::path dir = fresh_dir("flags");
    fs::path cfg = dir / "cfg.json";
    cli::write_file(cfg, R"({"task":"constants","s":0.5})");
    fs::path out = dir / "elsewhere";
    REQUIRE(run_with_args({cfg.string(), "--out", out.string(), "--threads", "2"}) == 0);
    CHECK(fs::exists(out / "constants.json"));
    fs::remove_all(dir);
}

TEST_CASE("deterministic number formatting sticks to 12 significant digits") {
    CHECK(cli::fmt12(M_PI) == "3.14159265359");
    CHECK(cli::fmt12(1.0) == "1");
    CHECK(cli::fmt12(-0.5) == "-0.5");
    CHECK(cli::fmt12(1e-30) == "1e-30");
    CHECK(cli::csv_field("plain") == "plain");
    CHECK(cli::csv_field("a,b") == "\"a,b\"");
    CHECK(cli::csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
}
