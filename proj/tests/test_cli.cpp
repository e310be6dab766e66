#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#ifndef AGENTATTN_CLI_PATH
#error "AGENTATTN_CLI_PATH must point at the built CLI binary"
#endif

#ifndef AGENTATTN_PRESET_DIR
#error "AGENTATTN_PRESET_DIR must point at the preset directory"
#endif

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(AGENTATTN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string run_capture(const std::string& args, const std::string& tmp) {
    const std::string cmd =
        std::string(AGENTATTN_CLI_PATH) + " " + args + " > " + tmp + " 2> /dev/null";
    std::system(cmd.c_str());
    std::ifstream is(tmp);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("verify subcommand exit codes") {
    CHECK(run("verify --seed 7 --trials 3") == 0);
    CHECK(run("verify --seed 7 --trials 2 --inject rowsum") == 1);
    CHECK(run("verify --trials 0") == 2);
    CHECK(run("verify --inject bogus") == 2);
    CHECK(run("nonsense") == 2);
}

TEST_CASE("bench subcommand emits one CSV row per N") {
    const std::string tmp =
        (std::filesystem::temp_directory_path() / "agentattn_cli_bench.csv").string();
    const std::string out =
        run_capture("bench --kernel agent --n 16 --d 16 --Ns 64,128,256", tmp);
    std::size_t lines = 0;
    for (char ch : out)
        if (ch == '\n') ++lines;
    CHECK(lines == 4);  // header + 3 rows
    CHECK(out.rfind("kernel,N,n,d,dtype,wall_ns,mac_count\n", 0) == 0);
    std::filesystem::remove(tmp);

    CHECK(run("bench --kernel agent --n 16 --d 16 --Ns 256,128") == 2);
    CHECK(run("bench --kernel bogus --Ns 64,128") == 2);
}

TEST_CASE("params subcommand reports totals near the published sizes") {
    const std::string preset =
        (std::filesystem::path(AGENTATTN_PRESET_DIR) / "agent-deit-t.json").string();
    const std::string tmp =
        (std::filesystem::temp_directory_path() / "agentattn_cli_params.json").string();
    const std::string out = run_capture("params --preset " + preset, tmp);
    REQUIRE_FALSE(out.empty());
    const auto j = nlohmann::json::parse(out);
    const double total = j["params"]["total"].get<double>();
    CHECK(std::abs(total - 6.0e6) / 6.0e6 < 0.03);
    std::filesystem::remove(tmp);

    CHECK(run("params --preset /no/such/file.json") == 2);
}
