#include <CLI11.hpp>

#include <iostream>

#include "disclose/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"experimentation-disclosure toolkit"};
    app.require_subcommand(1);
    disclose::RunSpec spec;

    auto add = [&](const char* name, const char* desc, bool policy,
                   bool policy_required) {
        CLI::App* s = app.add_subcommand(name, desc);
        s->add_option("-m,--market", spec.market_file, "market JSON file")->required();
        if (policy) {
            auto* o = s->add_option("-p,--policy", spec.policy_file, "policy JSON file");
            if (policy_required) o->required();
        }
        s->add_option("-o,--out", spec.output_dir, "output directory")
            ->capture_default_str();
        s->add_option("--step", spec.step, "CSV sampling step")->capture_default_str();
        s->add_option("--horizon", spec.horizon, "solve horizon")->capture_default_str();
        s->add_option("--n-paths", spec.n_paths, "simulation paths")
            ->capture_default_str();
        s->add_option("--seed", spec.seed, "random seed")->capture_default_str();
        s->add_option("--dt", spec.dt, "grid time step")->capture_default_str();
        s->add_option("--mass-step", spec.mass_step, "grid mass step")
            ->capture_default_str();
        s->add_option("--tolerance", spec.tolerance, "incentive slack tolerance")
            ->capture_default_str();
        return s;
    };
    add("benchmark", "transparent-disclosure benchmark path", false, false);
    add("equilibrium", "equilibrium path and welfare under a policy", true, true);
    add("optimal", "welfare-maximizing disclosure plan", false, false);
    add("simulate", "Monte Carlo welfare estimate under a policy", true, true);
    add("search", "grid search over release paths (horizon defaults to 0.15)", false,
        false);
    add("verify", "property checks on a market", true, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(disclose::ExitStatus::ConfigError);
    }

    CLI::App* sub = app.get_subcommands().front();
    spec.command = sub->get_name();
    if (spec.command == "search" && sub->count("--horizon") == 0) spec.horizon = 0.15;

    try {
        return static_cast<int>(disclose::run(spec));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
