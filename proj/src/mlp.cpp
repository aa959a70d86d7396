#include "hsac/mlp.hpp"

#include "hsac/kernels.hpp"

#include <cmath>

namespace hsac {

int64_t MlpParams::param_count() const {
    int64_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
}

MlpParams make_mlp(int in, const std::vector<int>& hidden, int out, Head head, Rng& rng) {
    if (in <= 0 || out <= 0) throw std::invalid_argument("make_mlp: dimensions must be positive");
    MlpParams p;
    p.head = head;
    int prev = in;
    auto add_layer = [&](int width) {
        MlpParams::Layer l;
        l.w = Tensor::zeros({width, prev});
        const double bound = std::sqrt(6.0 / (prev + width));
        for (double& v : l.w.v) v = (2.0 * rng.uniform() - 1.0) * bound;
        l.b = Tensor::zeros({width});
        p.layers.push_back(std::move(l));
        prev = width;
    };
    for (int h : hidden) add_layer(h);
    add_layer(out);
    return p;
}

DropoutMask make_dropout_mask(const MlpParams& params, int batch_rows, double drop_rate, Rng& rng) {
    if (drop_rate < 0.0 || drop_rate >= 1.0)
        throw std::invalid_argument("make_dropout_mask: drop rate must be in [0, 1)");
    DropoutMask m;
    m.keep_prob = 1.0 - drop_rate;
    const double scale = 1.0 / m.keep_prob;
    for (int i = 0; i + 1 < static_cast<int>(params.layers.size()); ++i) {
        const int width = params.layers[static_cast<size_t>(i)].w.rows();
        Tensor mask = Tensor::zeros({batch_rows, width});
        for (double& v : mask.v) v = rng.bernoulli(m.keep_prob) ? scale : 0.0;
        m.layer_masks.push_back(std::move(mask));
    }
    return m;
}

MlpVars tape_params(Tape& tape, const MlpParams& params) {
    MlpVars vars;
    for (const auto& l : params.layers) vars.layers.emplace_back(tape.leaf(l.w), tape.leaf(l.b));
    return vars;
}

namespace {

Tensor as_matrix(const Tensor& input, int in_dim) {
    if (!input.all_finite()) throw std::invalid_argument("mlp forward: non-finite input");
    if (input.shape.size() == 1) {
        if (input.size() != in_dim)
            throw std::invalid_argument("mlp forward: input length " + std::to_string(input.size()) +
                                        " != first layer width " + std::to_string(in_dim));
        Tensor m = input;
        m.shape = {1, in_dim};
        return m;
    }
    if (input.cols() != in_dim)
        throw std::invalid_argument("mlp forward: input has " + std::to_string(input.cols()) +
                                    " columns, expected " + std::to_string(in_dim));
    return input;
}

void check_mask(const DropoutMask* mask, const MlpParams& params, int rows) {
    if (!mask) return;
    if (static_cast<int>(mask->layer_masks.size()) != params.hidden_count())
        throw std::invalid_argument("mlp forward: dropout mask layer count mismatch");
    for (size_t i = 0; i < mask->layer_masks.size(); ++i) {
        const Tensor& m = mask->layer_masks[i];
        if (m.rows() != rows || m.cols() != params.layers[i].w.rows())
            throw std::invalid_argument("mlp forward: dropout mask shaped for a different batch");
    }
}

} // namespace

Var mlp_forward_logits(Tape& tape, const MlpParams& params, const MlpVars& vars, const Tensor& input,
                       const DropoutMask* mask) {
    Tensor x0 = as_matrix(input, params.in_dim());
    check_mask(mask, params, x0.rows());
    Var x = tape.constant(std::move(x0));
    const int n_layers = static_cast<int>(params.layers.size());
    for (int i = 0; i < n_layers; ++i) {
        const auto& [w, b] = vars.layers[static_cast<size_t>(i)];
        x = tape.add_bias(tape.matmul(x, w, false, true), b);
        if (i + 1 < n_layers) {
            x = tape.relu(x);
            if (mask) x = tape.mul(x, tape.constant(mask->layer_masks[static_cast<size_t>(i)]));
        }
    }
    return x;
}

Var mlp_forward(Tape& tape, const MlpParams& params, const MlpVars& vars, const Tensor& input,
                const DropoutMask* mask) {
    Var logits = mlp_forward_logits(tape, params, vars, input, mask);
    return params.head == Head::Softmax ? tape.softmax_rows(logits) : logits;
}

Tensor mlp_eval_logits(const MlpParams& params, const Tensor& input) {
    Tensor x = as_matrix(input, params.in_dim());
    const int n_layers = static_cast<int>(params.layers.size());
    for (int i = 0; i < n_layers; ++i) {
        const auto& l = params.layers[static_cast<size_t>(i)];
        Tensor y = matmul(x, false, l.w, true);
        kernels::add_bias_rows(y, l.b);
        if (i + 1 < n_layers) kernels::relu_inplace(y);
        x = std::move(y);
    }
    return x;
}

Tensor mlp_eval(const MlpParams& params, const Tensor& input) {
    Tensor x = mlp_eval_logits(params, input);
    if (params.head == Head::Softmax) kernels::softmax_rows_inplace(x);
    return x;
}

Tensor one_hot(int index, int width) {
    if (index < 0 || index >= width) throw std::invalid_argument("one_hot: index out of range");
    Tensor t = Tensor::zeros({width});
    t.v[static_cast<size_t>(index)] = 1.0;
    return t;
}

} // namespace hsac
