// End-to-end tests of the `fpt` command-line tool: exit codes, CSV schemas,
// and byte-level determinism of outputs across reruns and thread counts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef FPT_CLI_PATH
#error "FPT_CLI_PATH must be defined to the fpt executable path"
#endif

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() / ("fpt_cli_test_" + std::to_string(++counter));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args) {
    std::string cmd = std::string(FPT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("selftest succeeds") {
    CHECK(run("selftest") == 0);
}

TEST_CASE("convergence: schema, zero error at driftless center, determinism") {
    auto dir = scratch_dir();
    write_file(dir / "run.ini",
               "model = linear_drift\n"
               "convention = sde-consistent\n"
               "h_list = 0.125,0.0625\n"
               "test_set = center\n"
               "threads = 2\n");
    REQUIRE(run("convergence --config " + (dir / "run.ini").string() + " --out " + (dir / "a").string()) == 0);
    std::string csv = read_file(dir / "a" / "convergence.csv");
    auto lines = lines_of(csv);
    REQUIRE(lines.size() >= 3);
    CHECK(lines[0] == "model,rho,h,err_xnorm");
    // Center of the linear_drift cube has zero drift, so the singular part is
    // the whole solution and the correction (hence the error) vanishes.
    for (std::size_t i = 1; i < lines.size(); ++i) {
        CHECK(lines[i].substr(0, 13) == "linear_drift,");
        CHECK(lines[i].substr(lines[i].rfind(',') + 1) == "0");
    }
    CHECK(fs::exists(dir / "a" / "config_resolved.ini"));

    // Identical config must reproduce the CSV byte for byte, also when the
    // worker-thread count changes.
    REQUIRE(run("convergence --config " + (dir / "run.ini").string() + " --out " + (dir / "b").string()) == 0);
    CHECK(read_file(dir / "b" / "convergence.csv") == csv);
    REQUIRE(run("convergence --config " + (dir / "run.ini").string() + " --threads 5 --out " + (dir / "c").string()) == 0);
    CHECK(read_file(dir / "c" / "convergence.csv") == csv);
}

TEST_CASE("config errors exit with status 2") {
    auto dir = scratch_dir();
    write_file(dir / "unknown.ini", "no_such_key = 1\n");
    CHECK(run("convergence --config " + (dir / "unknown.ini").string() + " --out " + dir.string()) == 2);
    write_file(dir / "badh.ini", "h_list = 0.3\ntest_set = center\n");
    CHECK(run("convergence --config " + (dir / "badh.ini").string() + " --out " + dir.string()) == 2);
    write_file(dir / "badmodel.ini", "model = no_such_model\n");
    CHECK(run("convergence --config " + (dir / "badmodel.ini").string() + " --out " + dir.string()) == 2);
    CHECK(run("convergence --config " + (dir / "missing.ini").string() + " --out " + dir.string()) == 2);
}

TEST_CASE("interpolate: schema and saved interpolant files") {
    auto dir = scratch_dir();
    write_file(dir / "run.ini",
               "model = linear_drift\n"
               "h_list = 0.125\n"
               "q_list = 3,4\n"
               "test_set = center\n"
               "threads = 2\n");
    REQUIRE(run("interpolate --config " + (dir / "run.ini").string() + " --out " + (dir / "o").string()) == 0);
    auto lines = lines_of(read_file(dir / "o" / "interpolate.csv"));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "model,h,q,points,max_err");
    // q = N = 3 Smolyak grid in three dimensions is the single center point.
    CHECK(lines[1].find("linear_drift,0.125,3,1,") == 0);
    CHECK(fs::exists(dir / "o" / "interpolant_linear_drift_n8_q3.json"));
    CHECK(fs::exists(dir / "o" / "interpolant_linear_drift_n8_q4.json"));
}

TEST_CASE("probability: schema, column count, determinism across thread counts") {
    auto dir = scratch_dir();
    write_file(dir / "run.ini",
               "model = linear_drift\n"
               "convention = sde-consistent\n"
               "h_list = 0.0625\n"
               "test_set = center\n"
               "y_list = 0.5\n"
               "mc_paths = 20000\n"
               "threads = 2\n");
    REQUIRE(run("probability --config " + (dir / "run.ini").string() + " --out " + (dir / "a").string()) == 0);
    std::string csv = read_file(dir / "a" / "probability.csv");
    auto lines = lines_of(csv);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "model,rho1,rho2,rho3,y,p_mrm,p_mc,mc_se");
    // model + N rho columns + y + p_mrm + p_mc + mc_se
    for (const auto& line : lines)
        CHECK(std::count(line.begin(), line.end(), ',') == 7);
    // Probabilities are parseable and in [0, 1].
    std::istringstream row(lines[1]);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    double p_mrm = std::stod(fields[5]), p_mc = std::stod(fields[6]);
    CHECK(p_mrm >= -1e-6);
    CHECK(p_mrm <= 1.0 + 1e-6);
    CHECK(p_mc >= 0.0);
    CHECK(p_mc <= 1.0);

    REQUIRE(run("probability --config " + (dir / "run.ini").string() + " --threads 7 --out " + (dir / "b").string()) == 0);
    CHECK(read_file(dir / "b" / "probability.csv") == csv);
}

TEST_CASE("plot: deterministic SVG output and rejection of malformed CSV") {
    auto dir = scratch_dir();
    write_file(dir / "conv.csv",
               "model,rho,h,err_xnorm\n"
               "demo,0;0;0,0.125,0.04\n"
               "demo,0;0;0,0.0625,0.02\n"
               "demo,max,0.125,0.05\n"
               "demo,max,0.0625,0.025\n");
    REQUIRE(run("plot --csv " + (dir / "conv.csv").string() + " --out " + (dir / "a").string()) == 0);
    std::string svg = read_file(dir / "a" / "conv.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    REQUIRE(run("plot --csv " + (dir / "conv.csv").string() + " --out " + (dir / "b").string()) == 0);
    CHECK(read_file(dir / "b" / "conv.svg") == svg);

    write_file(dir / "garbage.csv", "this,is,not,a,known,header\n1,2,3,4,5,6\n");
    CHECK(run("plot --csv " + (dir / "garbage.csv").string() + " --out " + (dir / "c").string()) == 2);
    CHECK(run("plot --csv " + (dir / "nonexistent.csv").string() + " --out " + (dir / "d").string()) == 2);
}
