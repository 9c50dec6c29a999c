#include <sysid/experiment.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"sysid: stabilized method-of-moments identification of linear dynamical systems"};
    app.require_subcommand(1);

    std::string config_path, out_dir, trajectory;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config (schema 1)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
    };
    auto* simulate = app.add_subcommand("simulate", "simulate a trajectory");
    auto* identify = app.add_subcommand("identify", "stabilize, estimate Markov parameters, realize");
    auto* lowerbound = app.add_subcommand("lowerbound", "indistinguishable-pair sweep");
    auto* variance = app.add_subcommand("variance-demo", "naive vs stabilized second moments");
    auto* probe = app.add_subcommand("probe", "distribution and condition diagnostics");
    for (auto* sub : {simulate, identify, lowerbound, variance, probe}) add_common(sub);
    identify->add_option("--trajectory", trajectory, "trajectory CSV (overrides the config)");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = sysid::cli::load_config(config_path);
        if (app.get_subcommands().front()->count("--seed")) cfg.seed = seed;
        if (!out_dir.empty()) cfg.output = out_dir;
        if (simulate->parsed()) return sysid::cli::cmd_simulate(cfg, std::cout);
        if (identify->parsed()) return sysid::cli::cmd_identify(cfg, trajectory, std::cout);
        if (lowerbound->parsed()) return sysid::cli::cmd_lowerbound(cfg, std::cout);
        if (variance->parsed()) return sysid::cli::cmd_variance_demo(cfg, std::cout);
        if (probe->parsed()) return sysid::cli::cmd_probe(cfg, std::cout);
    } catch (const sysid::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
