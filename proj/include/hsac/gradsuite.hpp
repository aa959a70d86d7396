#pragma once

#include "hsac/agent.hpp"
#include "hsac/gradcheck.hpp"

#include <string>
#include <vector>

namespace hsac {

struct GradSuiteCase {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradSuiteResult {
    std::vector<GradSuiteCase> cases;
    double worst = 0.0;
    int instances = 0;
};

// Finite-difference verification of every training objective (controller and
// meta critic residuals, controller policy objective, entropy and adversarial
// meta policy objectives) on randomized small-network instances with frozen
// dropout masks. `eps` is the central-difference step.
GradSuiteResult run_gradcheck_suite(int instances, uint64_t seed, double eps);

} // namespace hsac
