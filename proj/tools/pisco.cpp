#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pisco/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Style/content disentanglement by linear post-processing of entangled features"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    unsigned jobs = 1;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"synth", "Generate a synthetic paired dataset"},
        {"fit", "Fit the post-processing projection P(lambda)"},
        {"apply", "Transform features with a fitted projection"},
        {"eval", "Disentanglement report against ground truth"},
        {"sweep", "Lambda x rho sweep over repeated synthetic runs"},
        {"spurious", "Spurious-correlation accuracy experiment"},
    };
    std::vector<CLI::App*> subs;
    std::vector<CLI::Option*> seed_opts;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        seed_opts.push_back(sub->add_option("--seed", seed, "Seed (overrides the config)"));
        sub->add_option("--jobs", jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    std::size_t which = 0;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (subs[i]->parsed()) which = i;
    }

    pisco::cli::Context ctx;
    ctx.out = out_dir;
    ctx.jobs = jobs;
    if (seed_opts[which]->count() > 0) ctx.seed = seed;

    try {
        pisco::io::json config = pisco::io::json::object();
        if (!config_path.empty()) {
            try {
                config = pisco::io::json::parse(pisco::io::read_file(config_path));
            } catch (const pisco::io::json::parse_error& e) {
                throw pisco::InvalidArgument(config_path + ": " + e.what());
            }
        }
        for (const auto& path : pisco::cli::run_command(commands[which].first, config, ctx)) {
            std::cout << path.string() << "\n";
        }
    } catch (const pisco::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
