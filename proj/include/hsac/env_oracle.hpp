#pragma once

#include "hsac/env.hpp"

#include <array>
#include <vector>

namespace hsac {

// Stationary policy on the augmented chain: probability of choosing `right`
// at each (position, visited-goal) pair. Positions are 1..ng; position 1 is
// terminal and its entries are ignored.
struct ChainPolicy {
    std::vector<std::array<double, 2>> p_right;  // [position][visited]

    static ChainPolicy always(EnvAction a, int ng);
    static ChainPolicy uniform(int ng);
    void validate(int ng) const;
};

// Exact expected undiscounted terminal reward of the chain without a step
// cap, computed on the augmented state space (position x visited-goal).
// Without a policy it is the optimum over policies (value iteration to a
// 1e-12 residual); with one it is exact policy evaluation by linear solve.
double optimal_return_oracle(const EnvConfig& cfg);
double optimal_return_oracle(const EnvConfig& cfg, const ChainPolicy& policy);

// Greedy policy extracted from the optimal value function.
ChainPolicy optimal_chain_policy(const EnvConfig& cfg);

} // namespace hsac
