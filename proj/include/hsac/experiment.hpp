#pragma once

#include "hsac/agent.hpp"
#include "hsac/env.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hsac {

// Full sweep description: which variants, which chain sizes, how many seeded
// runs of each, plus the agent hyperparameters shared by every run.
struct ExperimentConfig {
    std::vector<AgentVariant> variants{AgentVariant::HDQN, AgentVariant::EntropySAC,
                                       AgentVariant::MISAC, AgentVariant::AdversarialMISAC};
    std::vector<int> ng_values{6, 8, 12, 18};
    int seeds = 20;
    int episodes_per_run = 5000;
    int window = 100;
    Hyperparams hp;
    std::string out_dir = "out";
    int workers = 0;               // 0 -> hardware concurrency
    uint64_t base_seed = 0x5eed5eed5eed5eedULL;
    int max_steps_factor = 50;     // episode cap = factor * ng
    bool record_timing = false;    // off by default: the ms column must stay reproducible
    bool dump_traces = false;
    bool observe_visited = false;

    void validate() const;
};

// One CSV row of the learning curve.
struct MetricRow {
    AgentVariant variant;
    int ng = 0;
    int seed = 0;
    int episode = 0;               // -1 marks an aborted (diverged) run
    double reward = 0.0;
    double moving_avg = 0.0;
    bool partial_window = true;    // fewer than `window` episodes seen so far
    int64_t env_steps = 0;
    double ms = 0.0;

    static const char* csv_header();  // variant,ng,seed,episode,reward,moving_avg,partial_window,env_steps,ms
    std::string csv_line() const;
};

struct RunResult {
    AgentVariant variant;
    int ng = 0;
    int seed = 0;
    std::vector<MetricRow> rows;
    bool failed = false;           // non-finite loss encountered; run aborted
    double final_window_mean = 0.0;
    int64_t adam_skipped = 0;
    std::string trace;             // tab-separated step dump when requested
};

struct SummaryCell {
    AgentVariant variant;
    int ng = 0;
    double mean_final = 0.0;       // mean over non-failed seeds of the final window average
    double stderr_final = 0.0;
    double oracle_ratio = 0.0;     // mean_final / optimal_return_oracle(ng)
    int failed_runs = 0;

    static const char* csv_header();  // variant,ng,mean_final,stderr,oracle_ratio,failed_runs
    std::string csv_line() const;
};

struct ExperimentResult {
    std::vector<RunResult> runs;       // ordered by (variant, ng, seed)
    std::vector<SummaryCell> summary;  // ordered by (variant, ng)
};

// element i = mean of the trailing min(i+1, window) values
std::vector<double> moving_average(const std::vector<double>& series, int window);

// Per-(variant, ng) aggregation of finished runs; failed runs are counted and
// excluded from the mean.
std::vector<SummaryCell> summarize(const ExperimentConfig& cfg, const std::vector<RunResult>& runs);

// Stable per-run seed: base_seed combined with a hash of (variant, ng, seed
// index), so a run's stream does not depend on which other runs execute.
uint64_t run_seed(const ExperimentConfig& cfg, AgentVariant v, int ng, int seed_index);

// One fully seeded training run.
RunResult run_single(const ExperimentConfig& cfg, AgentVariant v, int ng, int seed_index);

// Executes the whole grid (optionally on several worker threads), writes
// metrics.csv and summary.csv under cfg.out_dir, and returns everything.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Serialization helpers shared by the CSV writers and tests.
std::string format_double(double x);

} // namespace hsac
