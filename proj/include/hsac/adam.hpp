#pragma once

#include "hsac/mlp.hpp"
#include "hsac/tensor.hpp"

#include <cstdint>
#include <vector>

namespace hsac {

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Per-network Adam state: first/second moments matching each parameter
// tensor, a shared step counter, and a count of skipped (non-finite) updates.
class AdamState {
public:
    AdamState(const MlpParams& params, AdamConfig cfg);

    // Standard bias-corrected Adam update. If any gradient entry is
    // non-finite the whole update is skipped and the incident counted.
    void step(MlpParams& params, const std::vector<const Tensor*>& grads);

    int64_t steps() const { return step_; }
    int64_t skipped() const { return skipped_; }
    const AdamConfig& config() const { return cfg_; }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    int64_t step_ = 0;
    int64_t skipped_ = 0;
};

// Convenience: gradients of a taped network, in layer order (w0, b0, w1, ...).
std::vector<const Tensor*> collect_grads(const Tape& tape, const MlpVars& vars);

} // namespace hsac
