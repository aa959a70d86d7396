#pragma once

#include "hsac/mlp.hpp"
#include "hsac/tape.hpp"

#include <functional>

namespace hsac {

// Builds a scalar loss on the given tape; any randomness (dropout masks,
// sampled noise) must be frozen inside the closure so repeated calls are
// deterministic.
using LossBuilder = std::function<Var(Tape&, const MlpParams&, const MlpVars&)>;

// Compares the tape gradient of `loss` against central finite differences of
// step `eps`, perturbing every parameter of `params` in turn. Returns the
// maximum over parameters of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const MlpParams& params, const LossBuilder& loss, double eps);

} // namespace hsac
