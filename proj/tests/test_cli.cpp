#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetexp/cli.hpp"

using namespace hetexp;
using namespace hetexp::cli;
namespace fs = std::filesystem;

namespace {

const char* kMuth = R"(scenario: muth
seed: 7
output:
  directory: OUT
muth:
  demand_slope: 1.0
  supply_slope: 1.0
  rho: 0.5
  sigma_eps: 0.1
  horizon: 2000
  belief: rls
)";

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("hetexp_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string muth_yaml(const fs::path& out) {
    std::string text = kMuth;
    text.replace(text.find("OUT"), 3, out.string());
    return text;
}

std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string body(const std::string& csv) { return csv.substr(csv.find('\n') + 1); }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

int shell(const std::string& args) {
    const char* exe = std::getenv("HETEXP_RUN");
    REQUIRE(exe != nullptr);
    const int status = std::system((std::string(exe) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
}

bool config_error_mentions(const std::string& yaml, const std::string& needle) {
    try {
        parse_config(yaml);
    } catch (const ConfigError& e) {
        for (const auto& p : e.problems())
            if (p.find(needle) != std::string::npos) return true;
        return false;
    }
    return false;
}

}  // namespace

TEST_CASE("shipped configs parse") {
    for (const auto& entry : fs::directory_iterator(fs::path(HETEXP_SOURCE_DIR) / "configs")) {
        CAPTURE(entry.path().string());
        CHECK_NOTHROW(load_config(entry.path().string()));
    }
}

TEST_CASE("defaults are filled and hashed") {
    const auto cfg = parse_config(muth_yaml("/tmp/x"));
    CHECK(cfg.kind == "muth");
    CHECK(cfg.seed == 7);
    CHECK(cfg.config["muth"].contains("u0"));
    const auto same = parse_config(muth_yaml("/tmp/elsewhere"));
    CHECK(cfg.hash() == same.hash());
    RunOverrides seed;
    seed.seed = 8;
    CHECK(parse_config(muth_yaml("/tmp/x"), seed).hash() != cfg.hash());
}

TEST_CASE("unknown keys are named") {
    std::string text = muth_yaml("/tmp/x") + "  foo: 1\n";
    CHECK(config_error_mentions(text, "foo"));
    CHECK(config_error_mentions("scenario: muth\nseed: 1\nbogus: 2\n", "bogus"));
}

TEST_CASE("every single-character key corruption is rejected") {
    const std::string text = muth_yaml("/tmp/x");
    std::istringstream lines(text);
    std::string line;
    std::size_t offset = 0, corrupted = 0;
    while (std::getline(lines, line)) {
        const auto colon = line.find(':');
        const auto start = line.find_first_not_of(' ');
        for (std::size_t i = start; i < colon; ++i) {
            std::string bad = text;
            bad[offset + i] = bad[offset + i] == 'q' ? 'z' : 'q';
            CAPTURE(bad);
            CHECK_THROWS_AS(parse_config(bad), ConfigError);
            ++corrupted;
        }
        offset += line.size() + 1;
    }
    CHECK(corrupted > 50);
}

TEST_CASE("values are validated") {
    auto text = muth_yaml("/tmp/x");
    text.replace(text.find("horizon: 2000"), 13, "horizon: -4");
    CHECK(config_error_mentions(text, "horizon"));
    text = muth_yaml("/tmp/x");
    text.replace(text.find("belief: rls"), 11, "belief: psychic");
    CHECK(config_error_mentions(text, "belief"));
    CHECK_THROWS_AS(parse_config("scenario: nope\nseed: 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config(": : :"), ConfigError);
}

TEST_CASE("blocks unused by the scenario are rejected") {
    const std::string text = muth_yaml("/tmp/x") + "bistable:\n  sigma: 0.7\n";
    CHECK(config_error_mentions(text, "bistable"));
}

TEST_CASE("muth run writes artifacts and a manifest") {
    const auto dir = scratch("run");
    const auto cfg = parse_config(muth_yaml(dir / "a"));
    const auto result = run_scenario(cfg);
    const auto csv = read(dir / "a" / "cobweb.csv");
    CHECK(csv.rfind("# config_hash=" + cfg.hash() + " seed=7", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2000 + 2);
    const auto manifest = nlohmann::json::parse(read(dir / "a" / "manifest.json"));
    CHECK(manifest["schema_version"] == kSchemaVersion);
    CHECK(manifest["scenario"] == "muth");
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["config_hash"] == cfg.hash());
    CHECK(manifest["versions"].contains("eigen"));
    CHECK(manifest["statistics"].contains("theta1"));
    CHECK(manifest == result.manifest);

    // same config, same bytes
    run_scenario(parse_config(muth_yaml(dir / "b")));
    CHECK(body(read(dir / "b" / "cobweb.csv")) == body(csv));
}

TEST_CASE("compare") {
    const auto dir = scratch("compare");
    const auto a = run_scenario(parse_config(muth_yaml(dir / "a"))).manifest;
    const auto same = run_scenario(parse_config(muth_yaml(dir / "b"))).manifest;
    auto diff = compare_runs(a, same);
    CHECK(diff["config"].empty());
    CHECK(diff["statistics"].empty());

    RunOverrides seed;
    seed.seed = 8;
    const auto reseeded = run_scenario(parse_config(muth_yaml(dir / "c"), seed)).manifest;
    diff = compare_runs(a, reseeded);
    REQUIRE(diff["config"].size() == 1);
    CHECK(diff["config"][0]["key"] == "/seed");
    CHECK(!diff["statistics"].empty());
    for (const auto& e : diff["statistics"])
        CHECK(e["difference"].get<double>() == doctest::Approx(e["b"].get<double>() - e["a"].get<double>()));

    auto other = a;
    other["scenario"] = "bistable";
    CHECK_THROWS_AS(compare_runs(a, other), InvalidInput);
    other = a;
    other["schema_version"] = kSchemaVersion + 1;
    CHECK_THROWS_AS(compare_runs(a, other), InvalidInput);
    CHECK_THROWS_AS(compare_manifest_files((dir / "missing.json").string(), (dir / "a" / "manifest.json").string()),
                    InvalidInput);
}

TEST_CASE("error reports carry a type") {
    CHECK(error_report(ConfigError({"x"}))["error"]["type"] == "config");
    CHECK(error_report(ConvergenceError("x"))["error"]["type"] == "convergence");
    CHECK(error_report(InvalidInput("x"))["error"]["type"] == "input");
    CHECK(error_report(std::runtime_error("x"))["error"]["type"] == "runtime");
}

TEST_CASE("command line exit codes") {
    const auto dir = scratch("exe");
    write(dir / "good.yaml", muth_yaml(dir / "good_out"));
    write(dir / "other.yaml", muth_yaml(dir / "other_out"));
    write(dir / "bad.yaml", muth_yaml(dir / "bad_out") + "  typo_key: 3\n");
    CHECK(shell("run " + (dir / "good.yaml").string()) == 0);
    CHECK(fs::exists(dir / "good_out" / "manifest.json"));
    CHECK(shell("run " + (dir / "bad.yaml").string()) == 2);
    CHECK(!fs::exists(dir / "bad_out"));
    CHECK(shell("run " + (dir / "good.yaml").string() + " --seed 9 --out " + (dir / "seeded").string()) == 0);
    CHECK(nlohmann::json::parse(read(dir / "seeded" / "manifest.json"))["seed"] == 9);

    // several configs in parallel land in per-config subdirectories
    CHECK(shell("run " + (dir / "good.yaml").string() + " " + (dir / "other.yaml").string() + " --jobs 2 --out " +
                (dir / "batch").string()) == 0);
    CHECK(fs::exists(dir / "batch" / "good" / "cobweb.csv"));
    CHECK(fs::exists(dir / "batch" / "other" / "cobweb.csv"));
    CHECK(body(read(dir / "batch" / "good" / "cobweb.csv")) == body(read(dir / "good_out" / "cobweb.csv")));
    CHECK(shell("run " + (dir / "good.yaml").string() + " " + (dir / "good.yaml").string()) == 2);

    CHECK(shell("compare " + (dir / "good_out" / "manifest.json").string() + " " +
                (dir / "seeded" / "manifest.json").string()) == 0);
    CHECK(shell("compare " + (dir / "good_out" / "manifest.json").string() + " " + (dir / "nope.json").string()) == 2);
    CHECK(shell("frobnicate") != 0);
}
