#pragma once

// Drives the command-line workflow in-process against a scratch directory.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "clozefact/cli.hpp"

namespace clozefact::testing {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

inline CliResult run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct WorkflowScale {
    std::size_t per_class_train = 12;
    std::size_t per_class_test = 4;
    std::size_t steps = 40;
    std::size_t folds = 3;
    std::string seeds = "11, 12";
};

// Fresh directory holding synthetic train/test files and a config.
inline std::filesystem::path prepare_workflow(const std::filesystem::path& dir,
                                              const WorkflowScale& s = {}) {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto train = (dir / "train.csv").string();
    const auto test = (dir / "test.csv").string();
    run_cli({"synth", "--out", train, "--per-class", std::to_string(s.per_class_train), "--seed",
             "7"});
    run_cli({"synth", "--out", test, "--per-class", std::to_string(s.per_class_test), "--seed",
             "8", "--id-prefix", "test"});
    const auto steps = std::to_string(s.steps);
    std::ofstream ini(dir / "run.ini");
    ini << "[paths]\ntrain = " << train << "\ntest = " << test
        << "\noutput_dir = " << (dir / "out").string() << "\n"
        << "[encoder]\nmax_len = 24\nd_model = 16\nn_heads = 2\nn_layers = 1\nd_ff = 32\n"
        << "[pretrain]\nsteps = " << steps << "\nbatch_size = 8\nwarmup = 4\npeak_lr = 1e-3\n"
        << "[finetune]\nsteps = " << steps << "\nbatch_size = 8\nwarmup = 4\npeak_lr = 1e-3\n"
        << "folds = " << s.folds << "\n"
        << "[prompt]\nsteps = " << steps << "\nbatch_size = 8\nwarmup = 4\npeak_lr = 1e-3\n"
        << "[stacker]\nsteps = 50\n"
        << "[models]\nseeds = " << s.seeds << "\n";
    return dir / "run.ini";
}

// Every training command followed by both prediction methods. Returns the
// first failing step's result, or the last one.
inline CliResult run_workflow(const std::filesystem::path& config) {
    const std::string c = config.string();
    const std::vector<std::vector<std::string>> steps{
        {"pretrain", "-c", c},
        {"finetune", "-c", c},
        {"finetune", "-c", c, "--four-class"},
        {"prompt-filter", "-c", c},
        {"ensemble", "-c", c},
        {"predict", "-c", c, "--method", "1"},
        {"predict", "-c", c, "--method", "2"},
    };
    CliResult last;
    for (const auto& s : steps) {
        last = run_cli(s);
        if (last.code != 0) {
            last.err = s[0] + ": " + last.err;
            return last;
        }
    }
    return last;
}

} // namespace clozefact::testing
