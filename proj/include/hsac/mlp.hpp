#pragma once

#include "hsac/rng.hpp"
#include "hsac/tape.hpp"
#include "hsac/tensor.hpp"

#include <vector>

namespace hsac {

enum class Head { Linear, Softmax };

// Fully-connected network: ReLU hidden layers, linear or softmax head.
struct MlpParams {
    struct Layer {
        Tensor w;  // [out x in]
        Tensor b;  // [out]
    };
    std::vector<Layer> layers;
    Head head = Head::Linear;

    int in_dim() const { return layers.front().w.cols(); }
    int out_dim() const { return layers.back().w.rows(); }
    int hidden_count() const { return static_cast<int>(layers.size()) - 1; }
    int64_t param_count() const;
};

// Xavier-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
MlpParams make_mlp(int in, const std::vector<int>& hidden, int out, Head head, Rng& rng);

// Inverted-scaling dropout over hidden-layer activations: kept entries are
// scaled by 1/keep_prob so evaluation mode is the identity. One mask per
// hidden layer, shaped for a fixed batch size.
struct DropoutMask {
    double keep_prob = 1.0;
    std::vector<Tensor> layer_masks;  // entries in {0, 1/keep_prob}
};

DropoutMask make_dropout_mask(const MlpParams& params, int batch_rows, double drop_rate, Rng& rng);

// Per-layer tape handles for a network's parameters.
struct MlpVars {
    std::vector<std::pair<Var, Var>> layers;  // (weight, bias)
};

MlpVars tape_params(Tape& tape, const MlpParams& params);

// Forward pass recorded on the tape. `input` is [B x in] (or [in] for one
// row). Mask, when given, must match the hidden widths and batch size;
// omitting it is evaluation mode. Rejects non-finite input.
Var mlp_forward_logits(Tape& tape, const MlpParams& params, const MlpVars& vars, const Tensor& input,
                       const DropoutMask* mask = nullptr);
Var mlp_forward(Tape& tape, const MlpParams& params, const MlpVars& vars, const Tensor& input,
                const DropoutMask* mask = nullptr);

// Plain evaluation (no tape, no dropout); bit-identical to the tape path.
Tensor mlp_eval_logits(const MlpParams& params, const Tensor& input);
Tensor mlp_eval(const MlpParams& params, const Tensor& input);

// One-hot helpers used to encode states and goals.
Tensor one_hot(int index, int width);

} // namespace hsac
