// Command-line front end: kinetic and fluid simulations, the epsilon-sweep,
// operator checks, and plot-data export.
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 numerical
// failure (aborted integration or failed operator checks).

#include <boltzns/harness.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using boltzns::harness::RunConfig;

namespace {

int worker_count() {
    if (const char* env = std::getenv("BOLTZNS_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || n < 1)
            throw std::invalid_argument("BOLTZNS_THREADS must be a positive integer");
        return int(n);
    }
    return 1;
}

RunConfig load(const std::string& path) {
    RunConfig cfg = boltzns::harness::load_config(path);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic kinetic simulator with hydrodynamic-limit checks"};
    app.require_subcommand(1);

    std::string config_path, run_dir;
    auto* sim_k = app.add_subcommand("simulate-kinetic", "Integrate the kinetic equation");
    sim_k->add_option("config", config_path, "INI configuration file")->required();
    auto* sim_f = app.add_subcommand("simulate-fluid", "Integrate the limit fluid system");
    sim_f->add_option("config", config_path, "INI configuration file")->required();
    auto* sweep = app.add_subcommand("sweep", "Epsilon-sweep against the fluid limit");
    sweep->add_option("config", config_path, "INI configuration file")->required();
    auto* check = app.add_subcommand("check-operators", "Run the operator check suite");
    check->add_option("config", config_path, "INI configuration file")->required();
    auto* plots = app.add_subcommand("export-plots", "Convert run CSV tables to plot data");
    plots->add_option("run-dir", run_dir, "Run output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const int threads = worker_count();
        Eigen::setNbThreads(threads);

        if (sim_k->parsed()) {
            const int rc = boltzns::harness::run_kinetic(load(config_path));
            std::cout << (rc == 0 ? "kinetic run completed" : "kinetic run aborted") << '\n';
            return rc;
        }
        if (sim_f->parsed()) {
            const int rc = boltzns::harness::run_fluid(load(config_path));
            std::cout << "fluid run completed\n";
            return rc;
        }
        if (sweep->parsed()) {
            auto table = boltzns::harness::eps_sweep(load(config_path));
            bool all_ok = !table.rows.empty();
            for (const auto& r : table.rows) {
                std::cout << "eps = " << r.eps;
                if (r.ok)
                    std::cout << "  err_u = " << r.err_u << "  err_theta = " << r.err_theta
                              << "  order_u = " << r.order_u << '\n';
                else
                    std::cout << "  FAILED: " << r.note << '\n';
                all_ok = all_ok && r.ok;
            }
            return all_ok ? 0 : 2;
        }
        if (check->parsed()) {
            auto j = boltzns::harness::check_operators(load(config_path));
            std::cout << j.dump(2) << '\n';
            return j["pass"].get<bool>() ? 0 : 2;
        }
        if (plots->parsed()) {
            const int n = boltzns::harness::export_plots(run_dir);
            std::cout << "wrote " << n << " plot data file(s)\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
