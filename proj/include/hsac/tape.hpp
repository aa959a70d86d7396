#pragma once

#include "hsac/tensor.hpp"

#include <vector>

namespace hsac {

// Handle to a tape node.
using Var = int;

// Reverse-mode autodiff over recorded tensor primitives. A tape is built by
// one forward pass, differentiated once with backward(), then cleared or
// discarded. Values and gradients stay owned by the tape.
class Tape {
public:
    // leaves
    Var leaf(Tensor t);               // participates in gradients
    Var constant(Tensor t);           // never receives a gradient

    // primitives
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    Var add_bias(Var x, Var bias);    // [R x C] + [C], broadcast over rows
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);            // elementwise
    Var relu(Var x);
    Var softmax_rows(Var x);
    Var log_softmax_rows(Var x);
    Var xlogx(Var x);                 // elementwise x*ln(x), 0 at 0
    Var gather_cols(Var x, std::vector<int> col_per_row);  // [R x C] -> [R]
    Var slice_rows(Var x, int first_row, int num_rows);
    Var sum(Var x);                   // -> scalar
    Var sum_rows(Var x);              // [R x C] -> [R]
    Var add_scalar(Var x, double s);
    Var mul_scalar(Var x, double s);
    Var reshape(Var x, std::vector<int> shape);

    // composites
    Var mean(Var x);
    Var dot(Var a, Var b) { return sum(mul(a, b)); }
    Var neg(Var x) { return mul_scalar(x, -1.0); }

    // Propagates d(loss)/d(node) for every recorded node. `loss` must be a
    // scalar. Calling it a second time without recording anew is an error.
    void backward(Var loss);

    const Tensor& value(Var v) const { return node(v).val; }
    // Gradient of the last backward() w.r.t. a grad-requiring node. Exact
    // zeros for leaves that did not participate in the loss.
    const Tensor& grad(Var v) const;

    size_t size() const { return nodes_.size(); }
    void clear();

private:
    enum class Op {
        Leaf, MatMul, AddBias, Add, Sub, Mul, Relu, SoftmaxRows, LogSoftmaxRows,
        XLogX, GatherCols, SliceRows, Sum, SumRows, AddScalar, MulScalar, Reshape,
    };

    struct Node {
        Op op;
        int a = -1, b = -1;
        bool trans_a = false, trans_b = false;
        double scalar = 0.0;
        int row0 = 0;
        std::vector<int> idx;
        Tensor val;
        Tensor grad;
        bool requires_grad = false;
        bool grad_ready = false;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    Node& node(Var v) { return nodes_.at(static_cast<size_t>(v)); }
    const Node& node(Var v) const { return nodes_.at(static_cast<size_t>(v)); }
    Var push(Node n);
    Tensor& grad_buf(int v);
    void accumulate(int v, const Tensor& g);
    void backprop_node(int i);
};

} // namespace hsac
