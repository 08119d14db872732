#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "hjlab/errors.hpp"
#include "hjlab/experiment.hpp"

namespace {

int report(const hjlab::RunManifest& m, const hjlab::ExperimentConfig& cfg) {
    for (const auto& s : m.stages) {
        std::printf("%-16s %-8s", s.name.c_str(), hjlab::to_string(s.status).c_str());
        if (!s.message.empty()) std::printf("  %s", s.message.c_str());
        std::printf("\n");
    }
    std::printf("outputs in %s (config %s)\n", cfg.output.directory.string().c_str(), m.config_hash.c_str());
    return m.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hjlab: degenerate viscous Hamilton-Jacobi lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run the pipeline of a config file");
    run->add_option("config", config_path, "JSON config (// comments allowed)")->required();
    run->add_option("-o,--output", out_dir, "Override output.directory");

    std::string preset_name;
    bool emit = false;
    auto* pre = app.add_subcommand("preset", "Run a built-in preset");
    pre->add_option("name", preset_name, "Preset name")->required();
    pre->add_flag("--emit-config", emit, "Print the preset as a config instead of running it");
    pre->add_option("-o,--output", out_dir, "Override output.directory");

    auto* val = app.add_subcommand("validate", "Check a config without computing anything");
    val->add_option("config", config_path, "JSON config")->required();

    auto* list = app.add_subcommand("list", "List presets");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*list) {
            for (const auto& n : hjlab::preset_names()) std::cout << n << '\n';
            return 0;
        }
        hjlab::ExperimentConfig cfg;
        if (*pre) {
            cfg = hjlab::preset(preset_name);
            if (emit) {
                std::cout << hjlab::to_json(cfg).dump(2) << '\n';
                return 0;
            }
        } else {
            cfg = hjlab::load_config(config_path);
        }
        if (*val) {
            std::cout << "config ok: " << cfg.experiment << ", pipeline length " << cfg.pipeline.size() << '\n';
            return 0;
        }
        if (!out_dir.empty()) cfg.output.directory = out_dir;
        return report(hjlab::run_experiment(cfg), cfg);
    } catch (const hjlab::HypothesisViolation& e) {
        std::cerr << "hypothesis violated (" << e.hypothesis() << "): " << e.what() << '\n';
        return 1;
    } catch (const hjlab::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
