#pragma once

#include "hsac/rng.hpp"

namespace hsac {

// Stochastic decision process on a chain of states s_1..s_{n_g}. The agent
// starts at s_2; `left` always moves down, `right` moves up only half the
// time and down otherwise. Entering s_1 ends the episode with reward 1.0 if
// s_{n_g} was visited first and 0.01 otherwise; hitting the step cap ends it
// with reward 0.
struct EnvConfig {
    int ng = 6;                  // number of states == goal-space size
    int max_episode_steps = 0;   // 0 -> 50 * ng

    static EnvConfig make(int ng, int max_steps = 0);
    void validate() const;
};

struct EnvState {
    int position = 2;          // 1..ng
    bool visited_goal = false; // has s_{ng} been visited this episode
    int steps = 0;

    bool terminal(const EnvConfig& cfg) const {
        return position == 1 || steps >= cfg.max_episode_steps;
    }
};

enum class EnvAction { Left = 0, Right = 1 };

struct StepOutcome {
    EnvState next;
    bool done = false;
    double external_reward = 0.0;  // in {0, 0.01, 1.0}, nonzero only at termination
};

EnvState env_reset(const EnvConfig& cfg);
StepOutcome env_step(const EnvConfig& cfg, const EnvState& state, EnvAction action, Rng& rng);

// True iff the state's position equals the goal index; the controller's
// internal reward is 1 exactly when this holds for the post-step state.
bool goal_reached(const EnvState& state, int goal);

} // namespace hsac
