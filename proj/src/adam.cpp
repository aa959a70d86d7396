#include "hsac/adam.hpp"

#include <cmath>

namespace hsac {

AdamState::AdamState(const MlpParams& params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& l : params.layers) {
        m_.push_back(Tensor::zeros(l.w.shape));
        m_.push_back(Tensor::zeros(l.b.shape));
        v_.push_back(Tensor::zeros(l.w.shape));
        v_.push_back(Tensor::zeros(l.b.shape));
    }
}

void AdamState::step(MlpParams& params, const std::vector<const Tensor*>& grads) {
    if (grads.size() != m_.size())
        throw std::invalid_argument("AdamState::step: gradient count mismatch");
    for (size_t i = 0; i < grads.size(); ++i) {
        if (grads[i]->size() != m_[i].size())
            throw std::invalid_argument("AdamState::step: gradient shape mismatch");
        if (!grads[i]->all_finite()) {
            ++skipped_;
            return;
        }
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    size_t slot = 0;
    for (auto& l : params.layers) {
        for (Tensor* t : {&l.w, &l.b}) {
            const Tensor& g = *grads[slot];
            Tensor& m = m_[slot];
            Tensor& v = v_[slot];
            for (int64_t k = 0; k < t->size(); ++k) {
                m.v[k] = cfg_.beta1 * m.v[k] + (1.0 - cfg_.beta1) * g.v[k];
                v.v[k] = cfg_.beta2 * v.v[k] + (1.0 - cfg_.beta2) * g.v[k] * g.v[k];
                const double mhat = m.v[k] / bc1;
                const double vhat = v.v[k] / bc2;
                t->v[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
            ++slot;
        }
    }
}

std::vector<const Tensor*> collect_grads(const Tape& tape, const MlpVars& vars) {
    std::vector<const Tensor*> grads;
    for (const auto& [w, b] : vars.layers) {
        grads.push_back(&tape.grad(w));
        grads.push_back(&tape.grad(b));
    }
    return grads;
}

} // namespace hsac
