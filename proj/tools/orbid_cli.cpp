#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "orbid/cli.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out;
    std::string kind;
    double horizon = -1.0;
    long seed = -1;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "configuration file (key = value lines)");
        app->add_option("--out", out, "output directory");
        app->add_option("--kind", kind, "fit kind: eq | rie | trie");
        app->add_option("--horizon", horizon, "evaluation horizon in seconds");
        app->add_option("--seed", seed, "random seed");
    }

    orbid::RunConfig resolve() const {
        orbid::RunConfig cfg;
        if (!config_path.empty()) cfg = orbid::load_config(config_path);
        if (!out.empty()) cfg.out = out;
        if (!kind.empty()) cfg.kind = kind;
        if (horizon >= 0.0) cfg.horizon = horizon;
        if (seed >= 0) cfg.seed = unsigned(seed);
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"identification of oscillating systems via convex transverse error bounds"};
    app.require_subcommand(1);

    CommonFlags synth_flags, fit_flags, eval_flags;
    auto* synth = app.add_subcommand("synth", "generate synthetic oscillator data");
    synth_flags.attach(synth);

    auto* fitcmd = app.add_subcommand("fit", "identify a model from data");
    fit_flags.attach(fitcmd);

    auto* evalcmd = app.add_subcommand("eval", "simulate a model against data and score it");
    eval_flags.attach(evalcmd);
    std::string model_path;
    evalcmd->add_option("--model", model_path, "model file")->required();

    auto* verifycmd = app.add_subcommand("verify", "run the numerical property suites");
    bool flip_hook = false;
    verifycmd->add_flag("--inject-sign-flip", flip_hook,
                        "negate Delta_e^- in the LMI builder (must be caught)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : orbid::cli::kExitUsage;
    }

    try {
        if (synth->parsed()) return orbid::cli::cmd_synth(synth_flags.resolve());
        if (fitcmd->parsed()) return orbid::cli::cmd_fit(fit_flags.resolve());
        if (evalcmd->parsed()) return orbid::cli::cmd_eval(eval_flags.resolve(), model_path);
        if (verifycmd->parsed()) return orbid::cli::cmd_verify(flip_hook, std::cout);
    } catch (const orbid::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return orbid::cli::kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return orbid::cli::kExitSolver;
    }
    return orbid::cli::kExitUsage;
}
