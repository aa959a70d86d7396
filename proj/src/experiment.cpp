#include "hsac/experiment.hpp"

#include "hsac/env_oracle.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

namespace hsac {

void ExperimentConfig::validate() const {
    if (variants.empty()) throw std::invalid_argument("ExperimentConfig: no variants selected");
    if (ng_values.empty()) throw std::invalid_argument("ExperimentConfig: no ng values");
    for (int ng : ng_values)
        if (ng < 3) throw std::invalid_argument("ExperimentConfig: every ng must be >= 3");
    if (seeds < 1) throw std::invalid_argument("ExperimentConfig: seeds must be >= 1");
    if (episodes_per_run < 1) throw std::invalid_argument("ExperimentConfig: episodes must be >= 1");
    if (window < 1) throw std::invalid_argument("ExperimentConfig: window must be >= 1");
    if (max_steps_factor < 1) throw std::invalid_argument("ExperimentConfig: max_steps_factor >= 1");
    if (workers < 0) throw std::invalid_argument("ExperimentConfig: workers must be >= 0");
    hp.validate();
}

std::string format_double(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

const char* MetricRow::csv_header() {
    return "variant,ng,seed,episode,reward,moving_avg,partial_window,env_steps,ms";
}

std::string MetricRow::csv_line() const {
    std::string s;
    s.reserve(64);
    s += variant_name(variant);
    s += ',';
    s += std::to_string(ng);
    s += ',';
    s += std::to_string(seed);
    s += ',';
    s += std::to_string(episode);
    s += ',';
    s += format_double(reward);
    s += ',';
    s += format_double(moving_avg);
    s += ',';
    s += partial_window ? '1' : '0';
    s += ',';
    s += std::to_string(env_steps);
    s += ',';
    s += format_double(ms);
    return s;
}

const char* SummaryCell::csv_header() {
    return "variant,ng,mean_final,stderr,oracle_ratio,failed_runs";
}

std::string SummaryCell::csv_line() const {
    std::string s;
    s += variant_name(variant);
    s += ',';
    s += std::to_string(ng);
    s += ',';
    s += format_double(mean_final);
    s += ',';
    s += format_double(stderr_final);
    s += ',';
    s += format_double(oracle_ratio);
    s += ',';
    s += std::to_string(failed_runs);
    return s;
}

std::vector<double> moving_average(const std::vector<double>& series, int window) {
    if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
    std::vector<double> out(series.size());
    for (size_t i = 0; i < series.size(); ++i) {
        const size_t n = std::min(i + 1, static_cast<size_t>(window));
        double acc = 0.0;
        for (size_t j = i + 1 - n; j <= i; ++j) acc += series[j];
        out[i] = acc / static_cast<double>(n);
    }
    return out;
}

uint64_t run_seed(const ExperimentConfig& cfg, AgentVariant v, int ng, int seed_index) {
    const std::string tag = std::string(variant_name(v)) + "/" + std::to_string(ng) + "/" +
                            std::to_string(seed_index);
    return cfg.base_seed ^ fnv1a(tag);
}

namespace {
constexpr uint64_t kEnvStream = 0x7f4a7c159e3779b9ULL;
constexpr uint64_t kAgentStream = 0x51afd7ed558ccd89ULL;
} // namespace

RunResult run_single(const ExperimentConfig& cfg, AgentVariant v, int ng, int seed_index) {
    cfg.validate();
    const EnvConfig env = EnvConfig::make(ng, cfg.max_steps_factor * ng);
    const uint64_t rs = run_seed(cfg, v, ng, seed_index);
    Rng env_rng(mix64(rs ^ kEnvStream));
    Agent agent(v, env, cfg.hp, mix64(rs ^ kAgentStream), cfg.observe_visited);

    RunResult result;
    result.variant = v;
    result.ng = ng;
    result.seed = seed_index;

    std::vector<double> rewards;
    std::vector<int64_t> steps_after;
    std::vector<double> ms_after;
    rewards.reserve(static_cast<size_t>(cfg.episodes_per_run));

    int64_t total_steps = 0;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        if (!cfg.record_timing) return 0.0;
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    for (int episode = 0; episode < cfg.episodes_per_run && !result.failed; ++episode) {
        EnvState state = env_reset(env);
        int goal = agent.pick_goal(state);
        EnvState tenure_start = state;
        double tenure_return = 0.0;
        double episode_reward = 0.0;

        while (true) {
            const EnvAction action = agent.act(state, goal);
            const StepOutcome out = env_step(env, state, action, env_rng);
            const bool reached = goal_reached(out.next, goal);

            ControllerTransition ct;
            ct.goal = goal;
            ct.state = state.position;
            ct.action = static_cast<int>(action);
            ct.internal_reward = reached ? 1.0 : 0.0;
            ct.next_state = out.next.position;
            ct.done = out.done;
            ct.reached_goal = reached;
            ct.state_visited = state.visited_goal;
            ct.next_visited = out.next.visited_goal;
            agent.add_controller_transition(ct);

            if (cfg.dump_traces) {
                result.trace += std::to_string(episode) + '\t' + std::to_string(out.next.steps - 1) +
                                '\t' + std::to_string(state.position) + '\t' +
                                std::to_string(static_cast<int>(action)) + '\t' +
                                std::to_string(out.next.position) + '\t' + (out.done ? '1' : '0') +
                                '\t' + format_double(out.external_reward) + '\n';
            }

            tenure_return += out.external_reward;
            episode_reward += out.external_reward;
            ++total_steps;

            const TrainStepStats ctrl_stats = agent.train_controller();
            if (!ctrl_stats.finite()) {
                result.failed = true;
                break;
            }

            if (reached || out.done) {
                MetaTransition mt;
                mt.state = tenure_start.position;
                mt.goal = goal;
                mt.external_return = tenure_return;
                mt.next_state = out.next.position;
                mt.done = out.done;
                mt.state_visited = tenure_start.visited_goal;
                mt.next_visited = out.next.visited_goal;
                agent.add_meta_transition(mt);

                const TrainStepStats meta_stats = agent.train_meta();
                if (!meta_stats.finite()) {
                    result.failed = true;
                    break;
                }
                if (!out.done) {
                    tenure_start = out.next;
                    tenure_return = 0.0;
                    goal = agent.pick_goal(out.next);
                }
            }
            if (out.done) break;
            state = out.next;
        }

        if (!result.failed) {
            rewards.push_back(episode_reward);
            steps_after.push_back(total_steps);
            ms_after.push_back(elapsed_ms());
        }
    }

    const std::vector<double> ma = moving_average(rewards, cfg.window);
    for (size_t i = 0; i < rewards.size(); ++i) {
        MetricRow row;
        row.variant = v;
        row.ng = ng;
        row.seed = seed_index;
        row.episode = static_cast<int>(i);
        row.reward = rewards[i];
        row.moving_avg = ma[i];
        row.partial_window = static_cast<int>(i) + 1 < cfg.window;
        row.env_steps = steps_after[i];
        row.ms = ms_after[i];
        result.rows.push_back(row);
    }
    if (result.failed) {
        // explicit marker: episode -1, nan rewards, at the point of failure
        MetricRow row;
        row.variant = v;
        row.ng = ng;
        row.seed = seed_index;
        row.episode = -1;
        row.reward = std::numeric_limits<double>::quiet_NaN();
        row.moving_avg = std::numeric_limits<double>::quiet_NaN();
        row.partial_window = true;
        row.env_steps = total_steps;
        row.ms = elapsed_ms();
        result.rows.push_back(row);
    }
    result.final_window_mean = (!result.failed && !ma.empty()) ? ma.back() : 0.0;
    result.adam_skipped = agent.adam_skipped();
    return result;
}

std::vector<SummaryCell> summarize(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
    std::vector<SummaryCell> cells;
    for (AgentVariant v : cfg.variants) {
        for (int ng : cfg.ng_values) {
            SummaryCell cell;
            cell.variant = v;
            cell.ng = ng;
            std::vector<double> finals;
            for (const auto& r : runs) {
                if (r.variant != v || r.ng != ng) continue;
                if (r.failed) {
                    ++cell.failed_runs;
                } else {
                    finals.push_back(r.final_window_mean);
                }
            }
            if (finals.empty()) {
                cell.mean_final = std::numeric_limits<double>::quiet_NaN();
                cell.stderr_final = std::numeric_limits<double>::quiet_NaN();
                cell.oracle_ratio = std::numeric_limits<double>::quiet_NaN();
            } else {
                double mean = 0.0;
                for (double f : finals) mean += f;
                mean /= static_cast<double>(finals.size());
                double var = 0.0;
                for (double f : finals) var += (f - mean) * (f - mean);
                const size_t n = finals.size();
                cell.mean_final = mean;
                cell.stderr_final =
                    n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) /
                                std::sqrt(static_cast<double>(n))
                          : 0.0;
                cell.oracle_ratio = mean / optimal_return_oracle(EnvConfig::make(ng));
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    {
        std::ofstream probe(fs::path(cfg.out_dir) / ".write_probe");
        if (!probe) throw std::runtime_error("run_experiment: output path not writable: " + cfg.out_dir);
    }
    fs::remove(fs::path(cfg.out_dir) / ".write_probe", ec);

    struct Cell {
        AgentVariant v;
        int ng;
        int seed;
    };
    std::vector<Cell> cells;
    for (AgentVariant v : cfg.variants)
        for (int ng : cfg.ng_values)
            for (int s = 0; s < cfg.seeds; ++s) cells.push_back({v, ng, s});

    ExperimentResult result;
    result.runs.resize(cells.size());

    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int workers = std::min<int>(static_cast<int>(cells.size()),
                                      cfg.workers > 0 ? cfg.workers : std::max(1, hw));

    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                result.runs[i] = run_single(cfg, cells[i].v, cells[i].ng, cells[i].seed);
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    result.summary = summarize(cfg, result.runs);

    std::ofstream metrics(fs::path(cfg.out_dir) / "metrics.csv");
    metrics << MetricRow::csv_header() << '\n';
    for (const auto& run : result.runs)
        for (const auto& row : run.rows) metrics << row.csv_line() << '\n';

    std::ofstream summary(fs::path(cfg.out_dir) / "summary.csv");
    summary << SummaryCell::csv_header() << '\n';
    for (const auto& cell : result.summary) summary << cell.csv_line() << '\n';

    for (const auto& run : result.runs) {
        if (run.adam_skipped > 0)
            std::cerr << "note: " << variant_name(run.variant) << " ng=" << run.ng
                      << " seed=" << run.seed << " skipped " << run.adam_skipped
                      << " non-finite gradient updates\n";
        if (cfg.dump_traces) {
            const std::string name = std::string("trace_") + variant_name(run.variant) + "_" +
                                     std::to_string(run.ng) + "_" + std::to_string(run.seed) +
                                     ".tsv";
            std::ofstream tf(fs::path(cfg.out_dir) / name);
            tf << run.trace;
        }
    }
    return result;
}

} // namespace hsac
