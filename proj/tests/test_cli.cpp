// Drives the llmcache binary end to end: subcommands, exit codes, report
// files. The binary path arrives as argv[1] from CTest.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

namespace {

std::string g_binary;

int run_cli(const std::string& args) {
    const std::string cmd = g_binary + " " + args + " > cli_stdout.txt 2> cli_stderr.txt";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_tiny_config(const std::string& path) {
    std::ofstream out(path);
    out << R"({
      "model": {"vocab": 128, "dim": 32, "layers": 3, "ffn_dim": 64, "seed": 5},
      "fingerprint": {"dense_dim": 16},
      "cache": {"capacity": 64, "validation_rate": 0.0},
      "workload": {"num_bases": 3, "variants_per_base": 2, "perturbation_rate": 0.0,
                   "seq_len": 10, "seed": 6},
      "tau": 0.85,
      "bench": {"warmup": 0}
    })";
}

}  // namespace

TEST_CASE("run: success, summary output, json report") {
    write_tiny_config("cli_cfg.json");
    REQUIRE(run_cli("run --config cli_cfg.json --out cli_report.json --format json") == 0);
    const std::string stdout_text = slurp("cli_stdout.txt");
    REQUIRE(stdout_text.find("hit rate") != std::string::npos);
    const nlohmann::json report = nlohmann::json::parse(slurp("cli_report.json"));
    REQUIRE(report.at("requests").size() == 6);
    REQUIRE(report.at("totals").at("hits").get<int>() == 9);  // 3 replayed requests x 3 layers
}

TEST_CASE("run: csv report carries the pinned header") {
    write_tiny_config("cli_cfg.json");
    REQUIRE(run_cli("run --config cli_cfg.json --out cli_report.csv --format csv") == 0);
    const std::string csv = slurp("cli_report.csv");
    REQUIRE(csv.rfind("layer,hits,misses,rate\n", 0) == 0);
}

TEST_CASE("config errors exit with 2") {
    {
        std::ofstream out("cli_bad.json");
        out << R"({"model": {"dim": 33}})";
    }
    REQUIRE(run_cli("run --config cli_bad.json") == 2);
    REQUIRE(slurp("cli_stderr.txt").find("config error") != std::string::npos);

    REQUIRE(run_cli("run --config cli_missing.json") == 2);
}

TEST_CASE("runtime errors exit with 1") {
    write_tiny_config("cli_cfg.json");
    REQUIRE(run_cli("run --config cli_cfg.json --corpus cli_no_such_corpus.txt") == 1);
}

TEST_CASE("sweep-tau prints one row per threshold") {
    write_tiny_config("cli_cfg.json");
    REQUIRE(run_cli("sweep-tau --config cli_cfg.json --taus 0.5,0.9") == 0);
    const std::string out = slurp("cli_stdout.txt");
    REQUIRE(out.find("0.500") != std::string::npos);
    REQUIRE(out.find("0.900") != std::string::npos);
}

TEST_CASE("snapshot then warm-start run") {
    write_tiny_config("cli_cfg.json");
    REQUIRE(run_cli("snapshot --config cli_cfg.json --out cli_banks.llmc") == 0);
    REQUIRE(run_cli("run --config cli_cfg.json --warm-start cli_banks.llmc "
                    "--out cli_warm.json --format json") == 0);
    const nlohmann::json report = nlohmann::json::parse(slurp("cli_warm.json"));
    REQUIRE(report.at("totals").at("aggregate_hit_rate_pct").get<double>() == 100.0);
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-llmcache-binary>\n");
        return 1;
    }
    g_binary = argv[1];
    doctest::Context context;
    const int rc = context.run();
    for (const char* f : {"cli_cfg.json", "cli_bad.json", "cli_report.json", "cli_report.csv",
                          "cli_banks.llmc", "cli_warm.json", "cli_stdout.txt", "cli_stderr.txt"})
        std::remove(f);
    return rc;
}
