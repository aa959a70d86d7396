#include "hsac/gradcheck.hpp"

#include <cmath>

namespace hsac {

namespace {

double eval_loss(const MlpParams& params, const LossBuilder& loss) {
    Tape tape;
    MlpVars vars = tape_params(tape, params);
    Var l = loss(tape, params, vars);
    return tape.value(l).v[0];
}

} // namespace

double grad_check(const MlpParams& params, const LossBuilder& loss, double eps) {
    Tape tape;
    MlpVars vars = tape_params(tape, params);
    Var l = loss(tape, params, vars);
    tape.backward(l);

    std::vector<Tensor> analytic;
    for (const auto& [w, b] : vars.layers) {
        analytic.push_back(tape.grad(w));
        analytic.push_back(tape.grad(b));
    }

    MlpParams scratch = params;
    double worst = 0.0;
    size_t slot = 0;
    for (auto& layer : scratch.layers) {
        for (Tensor* t : {&layer.w, &layer.b}) {
            for (int64_t k = 0; k < t->size(); ++k) {
                const double saved = t->v[k];
                t->v[k] = saved + eps;
                const double up = eval_loss(scratch, loss);
                t->v[k] = saved - eps;
                const double down = eval_loss(scratch, loss);
                t->v[k] = saved;
                const double numeric = (up - down) / (2.0 * eps);
                const double a = analytic[slot].v[k];
                const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
                worst = std::max(worst, err);
            }
            ++slot;
        }
    }
    return worst;
}

} // namespace hsac
