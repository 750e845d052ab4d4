#include "evofam/scenario.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 2;
constexpr int kExitInvalidInput = 3;
constexpr int kExitInternal = 4;

int do_run(const std::string& target, int threads, double tol_override,
           const std::string& output_dir, long long seed_override) {
    if (threads > 0) evofam::set_thread_count(threads);
    evofam::Scenario scenario = evofam::resolve_scenario(target);
    if (tol_override > 0) scenario.tolerance = tol_override;
    if (seed_override >= 0) scenario.seed = static_cast<std::uint64_t>(seed_override);
    if (!output_dir.empty()) scenario.output_dir = output_dir;

    evofam::RunResult result = evofam::run_scenario(scenario);
    evofam::write_report_bundle(result, scenario, scenario.output_dir);
    std::cout << result.summary;
    std::cout << "report bundle written to " << scenario.output_dir << "\n";
    return result.exit_code == 0 ? kExitOk : kExitCheckFailed;
}

int do_list() {
    for (const auto& [name, text] : evofam::bundled_scenarios()) {
        const auto j = evofam::Json::parse(text);
        std::cout << name << "\n    " << j.value("description", "") << "\n";
    }
    return kExitOk;
}

int do_describe(const std::string& name) {
    std::cout << name << ": " << evofam::describe_check(name) << "\n";
    return kExitOk;
}

int do_export_kernel(const std::string& target, double t, double s, const std::string& out,
                     int threads) {
    if (threads > 0) evofam::set_thread_count(threads);
    evofam::Scenario scenario = evofam::resolve_scenario(target);
    evofam::OperatorPath path = evofam::build_model(scenario.model, scenario.horizon);
    evofam::Propagator prop =
        evofam::propagate_to_tolerance(path, 0.0, scenario.horizon, scenario.tolerance);
    evofam::export_kernel_csv(out, prop, {{t, s}});
    std::cout << "kernel written to " << out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evofam: non-autonomous evolution families by product integration"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker thread count (default: EVOFAM_THREADS or hardware)");

    std::string target, output_dir;
    double tol_override = -1.0;
    long long seed_override = -1;
    auto* run = app.add_subcommand("run", "run a bundled scenario or a scenario file");
    run->add_option("scenario", target, "bundled name or path to a scenario JSON file")->required();
    run->add_option("--tolerance-override", tol_override, "override the scenario tolerance");
    run->add_option("--output-dir", output_dir, "report bundle directory");
    run->add_option("--seed", seed_override, "override the scenario seed");

    auto* list = app.add_subcommand("list-scenarios", "list bundled scenarios");

    std::string check_name;
    auto* describe = app.add_subcommand("describe", "describe a named check and its bound");
    describe->add_option("check", check_name, "check name")->required();

    std::string kernel_target, kernel_out = "kernel.csv";
    double kt = 1.0, ks = 0.0;
    auto* exportk = app.add_subcommand("export-kernel", "export kernel values of U(t,s) as CSV");
    exportk->add_option("scenario", kernel_target, "bundled name or scenario file")->required();
    exportk->add_option("--t", kt, "final time")->required();
    exportk->add_option("--s", ks, "initial time")->required();
    exportk->add_option("--output", kernel_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return do_run(target, threads, tol_override, output_dir, seed_override);
        if (list->parsed()) return do_list();
        if (describe->parsed()) return do_describe(check_name);
        if (exportk->parsed()) return do_export_kernel(kernel_target, kt, ks, kernel_out, threads);
    } catch (const evofam::ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitInvalidInput;
    } catch (const evofam::DimensionError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitInvalidInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
