// Command-line front end: verification suite, architecture accounting, and
// kernel scaling benchmarks.
//
//   agentattn_cli verify --seed 7 --trials 50
//   agentattn_cli bench  --kernel agent --n 49 --d 64 --Ns 256,512,1024
//   agentattn_cli params --preset presets/agent-deit-t.json
//
// Exit codes: 0 success, 1 check failure, 2 usage/config error.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include <agentattn/agentattn.hpp>

namespace {

using namespace agentattn;

std::ostream& open_sink(const std::string& path, std::ofstream& file) {
    if (path.empty()) return std::cout;
    file.open(path);
    if (!file) throw io_error("cannot open output file " + path);
    return file;
}

int cmd_verify(std::uint64_t seed, std::size_t trials, const std::string& inject,
               const std::string& out_path) {
    std::ofstream file;
    std::ostream& os = open_sink(out_path, file);

    std::vector<CheckReport> reports = property_suite(seed, trials, inject);

    // oracle grid: pure kernel vs O(N^2) composed path
    double worst = 0.0;
    for (std::size_t N : {4u, 16u, 64u}) {
        for (std::size_t n : {1u, 4u, 16u}) {
            if (n > N) continue;
            for (std::size_t s = 0; s < std::min<std::size_t>(trials, 50); ++s) {
                std::mt19937_64 rng(seed + 1000 * N + 10 * n + s);
                auto in = detail::random_inputs(N, n, 8, rng);
                worst = std::max(worst, double(max_abs_diff(agent_attention_pure(in),
                                                            composed_matrix_oracle(in))));
            }
        }
    }
    reports.push_back(CheckReport::from_metric("oracle_grid", worst, 1e-12));

    // failing reports last so the tail of the stream shows the problem
    std::stable_partition(reports.begin(), reports.end(),
                          [](const CheckReport& r) { return r.passed; });
    std::size_t failed = 0;
    for (const CheckReport& r : reports) {
        os << to_json(r).dump() << '\n';
        if (!r.passed) ++failed;
    }
    std::cerr << reports.size() << " checks, " << failed << " failed\n";
    return failed == 0 ? 0 : 1;
}

int cmd_bench(const std::string& kernel, const std::vector<std::size_t>& Ns,
              std::size_t n, std::size_t d, std::size_t repeats,
              const std::string& dtype, std::size_t threads, std::uint64_t seed,
              const std::string& out_path) {
    std::ofstream file;
    std::ostream& os = open_sink(out_path, file);
    std::vector<BenchRow> rows =
        dtype == "f64"
            ? run_scaling<double>(kernel, Ns, n, d, repeats, 2, seed, threads)
            : run_scaling<float>(kernel, Ns, n, d, repeats, 2, seed, threads);
    write_csv_header(os);
    for (const BenchRow& r : rows) write_csv_row(os, r);
    std::cerr << scaling_summary(rows).dump() << '\n';
    return 0;
}

int cmd_params(const std::string& preset_path) {
    const ModelPreset preset = load_preset(preset_path);
    const Model<float> model = build<float>(preset, 0);
    const ParamReport report = count_params(model);

    nlohmann::json j;
    j["preset"] = preset.name;
    nlohmann::json comps = nlohmann::json::object();
    for (const auto& [name, count] : report.components) comps[name] = count;
    j["params"] = {{"components", comps}, {"total", report.total}};
    j["flops"] = flops_model_forward(preset);
    std::cout << j.dump(2) << '\n';
    std::cerr << preset.name << ": " << report.total << " params, "
              << flops_model_forward(preset) << " flops\n";
    return 0;
}

std::vector<std::size_t> parse_ns(const std::string& spec) {
    std::vector<std::size_t> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) throw config_error("bad --Ns entry");
        out.push_back(std::stoull(item));
    }
    if (out.empty()) throw config_error("--Ns must list at least one size");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agent attention verification and benchmark harness"};
    app.require_subcommand(1);
    app.fallthrough();  // let the global --seed appear after the subcommand

    std::uint64_t seed = 0;
    std::string out_path;
    app.add_option("--seed", seed, "rng seed")->capture_default_str();

    auto* verify = app.add_subcommand("verify", "run property suite and oracle checks");
    std::size_t trials = 50;
    std::string inject;
    std::string verify_out;
    verify->add_option("--trials", trials, "trials per property")->capture_default_str();
    verify->add_option("--inject", inject, "fault-injection target property");
    verify->add_option("--out", verify_out, "write JSON-lines report to file");

    auto* bench = app.add_subcommand("bench", "kernel scaling sweep, CSV output");
    std::string kernel, ns_spec, dtype = "f32", bench_out;
    std::size_t agent_n = 49, head_d = 64, repeats = 5, threads = 1;
    bench->add_option("--kernel", kernel, "agent or softmax")->required();
    bench->add_option("--Ns", ns_spec, "comma-separated ascending token counts")->required();
    bench->add_option("--n", agent_n, "agent tokens")->capture_default_str();
    bench->add_option("--d", head_d, "head dim")->capture_default_str();
    bench->add_option("--repeats", repeats, "timed repeats (median)")->capture_default_str();
    bench->add_option("--dtype", dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
    bench->add_option("--threads", threads, "throughput mode threads")->capture_default_str();
    bench->add_option("--out", bench_out, "write CSV to file");

    auto* params = app.add_subcommand("params", "parameter and FLOP accounting");
    std::string preset_path;
    params->add_option("--preset", preset_path, "preset JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        if (verify->parsed()) {
            if (trials < 1) {
                std::cerr << "verify: --trials must be >= 1\n";
                return 2;
            }
            return cmd_verify(seed, trials, inject, verify_out);
        }
        if (bench->parsed())
            return cmd_bench(kernel, parse_ns(ns_spec), agent_n, head_d, repeats, dtype,
                             threads, seed, bench_out);
        if (params->parsed()) {
            if (!std::filesystem::exists(preset_path)) {
                std::cerr << "params: no such preset file: " << preset_path << '\n';
                return 2;
            }
            return cmd_params(preset_path);
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
