#include <CLI11.hpp>

#include "jumpvol/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Investment, consumption and life-insurance solver with maximum-principle checks"};
    jumpvol::RunOptions opts;
    std::string mode;
    std::uint64_t seed = 0;
    std::string out;
    app.add_option("--config", opts.config_path, "scenario file")->required()->check(CLI::ExistingFile);
    auto* mode_opt = app.add_option("--mode", mode, "solve-h | simulate | verify | example | all")
                         ->check(CLI::IsMember({"solve-h", "simulate", "verify", "example", "all"}));
    auto* seed_opt = app.add_option("--seed", seed, "64-bit seed, overrides [run] seed");
    auto* out_opt = app.add_option("--out", out, "output directory, overrides [run] out");
    app.add_flag("--allow-assumption-failures", opts.allow_assumption_failures,
                 "continue when the market assumption check fails");
    CLI11_PARSE(app, argc, argv);
    if (*mode_opt) opts.mode = mode;
    if (*seed_opt) opts.seed = seed;
    if (*out_opt) opts.out_dir = out;
    return jumpvol::run(opts);
}
