#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(BLOCKRG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh(const std::string& name) {
    fs::path d = fs::current_path() / "cli_out" / name;
    fs::remove_all(d);
    fs::create_directories(d.parent_path());
    return d;
}

}  // namespace

TEST_CASE("flow-solve writes a passing report", "[cli]") {
    fs::path d = fresh("flow");
    REQUIRE(run("flow-solve --out " + d.string()) == 0);
    json r = json::parse(slurp(d / "report.json"));
    CHECK(r["schema"] == "blockrg-report-v1");
    CHECK(r["status"] == "pass");
    CHECK(r["subcommand"] == "flow-solve");
    CHECK(fs::exists(d / "trajectory.csv"));
}

TEST_CASE("runs are reproducible", "[cli]") {
    fs::path a = fresh("det_a"), b = fresh("det_b");
    REQUIRE(run("flow-solve --seed 5 --out " + a.string()) == 0);
    REQUIRE(run("flow-solve --seed 5 --out " + b.string()) == 0);
    for (const auto& f : fs::directory_iterator(a)) CHECK(slurp(f.path()) == slurp(b / f.path().filename()));
    CHECK(json::parse(slurp(a / "report.json"))["seed"] == 5);
}

TEST_CASE("lattice-report passes", "[cli]") {
    fs::path d = fresh("lattice");
    CHECK(run("lattice-report --out " + d.string()) == 0);
    CHECK(json::parse(slurp(d / "report.json"))["status"] == "pass");
}

TEST_CASE("bad configuration yields an error record", "[cli]") {
    fs::path d = fresh("bad");
    fs::create_directories(d);
    std::ofstream(d / "cfg.json") << R"({"bogus": 1})";
    CHECK(run("flow-solve --config " + (d / "cfg.json").string() + " --out " + d.string()) == 3);
    json r = json::parse(slurp(d / "report.json"));
    CHECK(r["status"] == "error");
    CHECK(r["error"]["code"] == "bad_config");

    fs::path m = fresh("missing");
    CHECK(run("flow-solve --config /nonexistent.json --out " + m.string()) == 3);
    CHECK(json::parse(slurp(m / "report.json"))["error"]["code"] == "io");
}

TEST_CASE("zero flow model gives a zero trajectory", "[cli]") {
    fs::path d = fresh("zero");
    fs::create_directories(d);
    std::ofstream(d / "cfg.json") << R"({"flow_model": "zero"})";
    REQUIRE(run("flow-solve --config " + (d / "cfg.json").string() + " --out " + d.string()) == 0);
    std::istringstream in(slurp(d / "trajectory.csv"));
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        REQUIRE(cells.size() == 8);
        CHECK(std::stod(cells[2]) == 0.0);
        CHECK(std::stod(cells[3]) == 0.0);
        CHECK(std::stod(cells[4]) == 0.0);
    }
    CHECK(rows > 0);
}
