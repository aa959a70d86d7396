#include "hsac/config.hpp"
#include "hsac/env_oracle.hpp"
#include "hsac/experiment.hpp"
#include "hsac/gradsuite.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& variant_names,
            const std::vector<int>& ng_values, int seeds, int episodes, const std::string& out_dir,
            int workers, bool dump_traces, bool record_timing, uint64_t base_seed,
            bool base_seed_set) {
    hsac::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = hsac::load_config_file(config_path);
    if (!variant_names.empty()) {
        cfg.variants.clear();
        for (const auto& n : variant_names) cfg.variants.push_back(hsac::variant_from_name(n));
    }
    if (!ng_values.empty()) cfg.ng_values = ng_values;
    if (seeds > 0) cfg.seeds = seeds;
    if (episodes > 0) cfg.episodes_per_run = episodes;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (workers > 0) cfg.workers = workers;
    if (dump_traces) cfg.dump_traces = true;
    if (record_timing) cfg.record_timing = true;
    if (base_seed_set) cfg.base_seed = base_seed;

    const auto result = hsac::run_experiment(cfg);
    std::cout << "wrote " << cfg.out_dir << "/metrics.csv and " << cfg.out_dir << "/summary.csv\n";
    std::printf("%-22s %4s %12s %12s %12s %6s\n", "variant", "ng", "mean_final", "stderr",
                "oracle_ratio", "failed");
    for (const auto& cell : result.summary)
        std::printf("%-22s %4d %12.5f %12.5f %12.5f %6d\n", hsac::variant_name(cell.variant),
                    cell.ng, cell.mean_final, cell.stderr_final, cell.oracle_ratio,
                    cell.failed_runs);
    return 0;
}

int cmd_oracle(const std::vector<int>& ng_values, const std::string& policy_name) {
    std::printf("%4s %16s\n", "ng", "expected_return");
    for (int ng : ng_values) {
        const hsac::EnvConfig cfg = hsac::EnvConfig::make(ng);
        double value;
        if (policy_name.empty() || policy_name == "optimal") {
            value = hsac::optimal_return_oracle(cfg);
        } else if (policy_name == "always_left") {
            value = hsac::optimal_return_oracle(cfg, hsac::ChainPolicy::always(hsac::EnvAction::Left, ng));
        } else if (policy_name == "always_right") {
            value = hsac::optimal_return_oracle(cfg, hsac::ChainPolicy::always(hsac::EnvAction::Right, ng));
        } else if (policy_name == "uniform") {
            value = hsac::optimal_return_oracle(cfg, hsac::ChainPolicy::uniform(ng));
        } else {
            std::cerr << "unknown policy: " << policy_name
                      << " (expected optimal, always_left, always_right or uniform)\n";
            return 1;
        }
        std::printf("%4d %16.12f\n", ng, value);
    }
    return 0;
}

int cmd_gradcheck(int instances, uint64_t seed, double eps, double tolerance) {
    const auto result = hsac::run_gradcheck_suite(instances, seed, eps);
    bool ok = true;
    for (const auto& c : result.cases) {
        const bool pass = c.max_rel_err < tolerance;
        ok = ok && pass;
        std::printf("%-28s max_rel_err=%.3e  %s\n", c.name.c_str(), c.max_rel_err,
                    pass ? "ok" : "FAIL");
    }
    std::printf("worst over %d instances: %.3e (tolerance %.1e)\n", result.instances, result.worst,
                tolerance);
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical soft actor-critic testbed on a stochastic chain environment"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Train agents over a (variant x ng x seed) grid and write CSV metrics");
    std::string config_path, out_dir;
    std::vector<std::string> variant_names;
    std::vector<int> ng_values;
    int seeds = 0, episodes = 0, workers = 0;
    bool dump_traces = false, record_timing = false;
    uint64_t base_seed = 0;
    run->add_option("--config", config_path, "key = value config file");
    run->add_option("--variant", variant_names,
                    "agent variant (hdqn, entropy_sac, mi_sac, adversarial_mi_sac); repeatable");
    run->add_option("--ng", ng_values, "chain size / goal-space size; repeatable");
    run->add_option("--seeds", seeds, "number of seeded runs per cell");
    run->add_option("--episodes", episodes, "episodes per run");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--workers", workers, "concurrent runs");
    auto* seed_opt = run->add_option("--base-seed", base_seed, "base seed for the grid");
    run->add_flag("--dump-traces", dump_traces, "write per-step environment traces");
    run->add_flag("--record-timing", record_timing,
                  "fill the ms column with wall-clock time (breaks byte-reproducibility)");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "Print exact expected returns on the augmented chain");
    std::vector<int> oracle_ng{6, 8, 12, 18};
    std::string policy_name;
    oracle->add_option("--ng", oracle_ng, "chain sizes; repeatable");
    oracle->add_option("--policy", policy_name,
                       "optimal (default), always_left, always_right or uniform");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every training objective");
    int instances = 100;
    uint64_t gc_seed = 20240901;
    double eps = 1e-5, tolerance = 1e-4;
    gradcheck->add_option("--instances", instances, "random instances per objective");
    gradcheck->add_option("--seed", gc_seed, "suite seed");
    gradcheck->add_option("--eps", eps, "central-difference step");
    gradcheck->add_option("--tolerance", tolerance, "max relative error allowed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, variant_names, ng_values, seeds, episodes, out_dir, workers,
                           dump_traces, record_timing, base_seed, seed_opt->count() > 0);
        if (oracle->parsed()) return cmd_oracle(oracle_ng, policy_name);
        if (gradcheck->parsed()) return cmd_gradcheck(instances, gc_seed, eps, tolerance);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
