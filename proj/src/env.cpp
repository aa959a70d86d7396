#include "hsac/env.hpp"

#include <stdexcept>
#include <string>

namespace hsac {

EnvConfig EnvConfig::make(int ng, int max_steps) {
    EnvConfig cfg;
    cfg.ng = ng;
    cfg.max_episode_steps = max_steps > 0 ? max_steps : 50 * ng;
    cfg.validate();
    return cfg;
}

void EnvConfig::validate() const {
    if (ng < 3) throw std::invalid_argument("EnvConfig: ng must be >= 3");
    if (max_episode_steps < ng)
        throw std::invalid_argument("EnvConfig: max_episode_steps must be >= ng");
}

EnvState env_reset(const EnvConfig& cfg) {
    cfg.validate();
    EnvState s;
    s.position = 2;
    s.visited_goal = (cfg.ng == 2);
    s.steps = 0;
    return s;
}

StepOutcome env_step(const EnvConfig& cfg, const EnvState& state, EnvAction action, Rng& rng) {
    cfg.validate();
    if (state.terminal(cfg)) throw std::logic_error("env_step: episode already over");
    if (state.position < 2 || state.position > cfg.ng)
        throw std::invalid_argument("env_step: position out of range");

    int next_pos;
    if (action == EnvAction::Left) {
        next_pos = state.position - 1;
    } else {
        // right succeeds half the time; at the top a success is a self-loop
        const bool success = rng.bernoulli(0.5);
        next_pos = success ? std::min(state.position + 1, cfg.ng) : state.position - 1;
    }

    StepOutcome out;
    out.next.position = next_pos;
    out.next.visited_goal = state.visited_goal || next_pos == cfg.ng;
    out.next.steps = state.steps + 1;

    if (next_pos == 1) {
        out.done = true;
        out.external_reward = out.next.visited_goal ? 1.0 : 0.01;
    } else if (out.next.steps >= cfg.max_episode_steps) {
        out.done = true;
        out.external_reward = 0.0;
    }
    return out;
}

bool goal_reached(const EnvState& state, int goal) {
    if (goal < 1) throw std::invalid_argument("goal_reached: goal must be >= 1");
    return state.position == goal;
}

} // namespace hsac
