#include "hsac/tape.hpp"

#include "hsac/kernels.hpp"

#include <cmath>

namespace hsac {

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    backward_done_ = false;
    return static_cast<Var>(nodes_.size() - 1);
}

Var Tape::leaf(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(t);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(t);
    n.requires_grad = false;
    return push(std::move(n));
}

namespace {
void check_same_size(const Tensor& a, const Tensor& b, const char* who) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(who) + ": operand sizes differ, " +
                                    shape_str(a.shape) + " vs " + shape_str(b.shape));
}
} // namespace

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.val = hsac::matmul(node(a).val, trans_a, node(b).val, trans_b);
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(n));
}

Var Tape::add_bias(Var x, Var bias) {
    Node n;
    n.op = Op::AddBias;
    n.a = x;
    n.b = bias;
    n.val = node(x).val;
    kernels::add_bias_rows(n.val, node(bias).val);
    n.requires_grad = node(x).requires_grad || node(bias).requires_grad;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    check_same_size(node(a).val, node(b).val, "add");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.val = node(a).val;
    const Tensor& bb = node(b).val;
    for (int64_t i = 0; i < n.val.size(); ++i) n.val.v[i] += bb.v[i];
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    check_same_size(node(a).val, node(b).val, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.val = node(a).val;
    const Tensor& bb = node(b).val;
    for (int64_t i = 0; i < n.val.size(); ++i) n.val.v[i] -= bb.v[i];
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    check_same_size(node(a).val, node(b).val, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.val = node(a).val;
    const Tensor& bb = node(b).val;
    for (int64_t i = 0; i < n.val.size(); ++i) n.val.v[i] *= bb.v[i];
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(n));
}

Var Tape::relu(Var x) {
    Node n;
    n.op = Op::Relu;
    n.a = x;
    n.val = node(x).val;
    kernels::relu_inplace(n.val);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::softmax_rows(Var x) {
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = x;
    n.val = node(x).val;
    kernels::softmax_rows_inplace(n.val);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::log_softmax_rows(Var x) {
    Node n;
    n.op = Op::LogSoftmaxRows;
    n.a = x;
    n.val = node(x).val;
    kernels::log_softmax_rows_inplace(n.val);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::xlogx(Var x) {
    Node n;
    n.op = Op::XLogX;
    n.a = x;
    n.val = node(x).val;
    for (double& v : n.val.v) v = kernels::xlogx(v);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::gather_cols(Var x, std::vector<int> col_per_row) {
    const Tensor& xv = node(x).val;
    if (static_cast<int>(col_per_row.size()) != xv.rows())
        throw std::invalid_argument("gather_cols: one column index per row required");
    Node n;
    n.op = Op::GatherCols;
    n.a = x;
    n.val = Tensor::zeros({xv.rows()});
    for (int r = 0; r < xv.rows(); ++r) {
        const int c = col_per_row[static_cast<size_t>(r)];
        if (c < 0 || c >= xv.cols()) throw std::invalid_argument("gather_cols: column out of range");
        n.val.v[static_cast<size_t>(r)] = xv.at(r, c);
    }
    n.idx = std::move(col_per_row);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::slice_rows(Var x, int first_row, int num_rows) {
    const Tensor& xv = node(x).val;
    if (first_row < 0 || num_rows < 0 || first_row + num_rows > xv.rows())
        throw std::invalid_argument("slice_rows: range out of bounds");
    const int c = xv.cols();
    Node n;
    n.op = Op::SliceRows;
    n.a = x;
    n.row0 = first_row;
    n.val = Tensor::zeros({num_rows, c});
    std::copy(xv.v.begin() + static_cast<size_t>(first_row) * c,
              xv.v.begin() + static_cast<size_t>(first_row + num_rows) * c, n.val.v.begin());
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::sum(Var x) {
    Node n;
    n.op = Op::Sum;
    n.a = x;
    double acc = 0.0;
    for (double v : node(x).val.v) acc += v;
    n.val = Tensor::scalar(acc);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::sum_rows(Var x) {
    const Tensor& xv = node(x).val;
    Node n;
    n.op = Op::SumRows;
    n.a = x;
    n.val = Tensor::zeros({xv.rows()});
    for (int r = 0; r < xv.rows(); ++r) {
        double acc = 0.0;
        for (int c = 0; c < xv.cols(); ++c) acc += xv.at(r, c);
        n.val.v[static_cast<size_t>(r)] = acc;
    }
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::add_scalar(Var x, double s) {
    Node n;
    n.op = Op::AddScalar;
    n.a = x;
    n.scalar = s;
    n.val = node(x).val;
    for (double& v : n.val.v) v += s;
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::mul_scalar(Var x, double s) {
    Node n;
    n.op = Op::MulScalar;
    n.a = x;
    n.scalar = s;
    n.val = node(x).val;
    for (double& v : n.val.v) v *= s;
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::reshape(Var x, std::vector<int> shape) {
    if (Tensor::numel(shape) != node(x).val.size())
        throw std::invalid_argument("reshape: element count changed");
    Node n;
    n.op = Op::Reshape;
    n.a = x;
    n.val = node(x).val;
    n.val.shape = std::move(shape);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Var Tape::mean(Var x) {
    const int64_t n = node(x).val.size();
    if (n == 0) throw std::invalid_argument("mean: empty tensor");
    return mul_scalar(sum(x), 1.0 / static_cast<double>(n));
}

Tensor& Tape::grad_buf(int v) {
    Node& n = node(v);
    if (!n.grad_ready) {
        n.grad = Tensor::zeros(n.val.shape);
        n.grad_ready = true;
    }
    return n.grad;
}

void Tape::accumulate(int v, const Tensor& g) {
    Tensor& buf = grad_buf(v);
    for (int64_t i = 0; i < buf.size(); ++i) buf.v[i] += g.v[i];
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (!n.grad_ready)
        throw std::logic_error("Tape::grad: no gradient recorded for this node (run backward first)");
    return n.grad;
}

void Tape::backward(Var loss) {
    if (backward_done_)
        throw std::logic_error("Tape::backward: tape already replayed; record a new forward pass first");
    Node& ln = node(loss);
    if (ln.val.size() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
    backward_done_ = true;

    // Pre-allocate zero gradients for every grad-requiring leaf so unused
    // parameters read back exact zeros.
    for (auto& n : nodes_)
        if (n.op == Op::Leaf && n.requires_grad) {
            n.grad = Tensor::zeros(n.val.shape);
            n.grad_ready = true;
        }

    grad_buf(loss).v[0] = 1.0;
    for (int i = loss; i >= 0; --i) {
        const Node& n = node(i);
        if (!n.requires_grad || !n.grad_ready || n.op == Op::Leaf) continue;
        backprop_node(i);
    }
}

void Tape::backprop_node(int i) {
    Node& n = node(i);
    const Tensor& g = n.grad;
    auto wants = [&](int v) { return v >= 0 && node(v).requires_grad; };

    switch (n.op) {
    case Op::Leaf:
        break;
    case Op::MatMul: {
        const Tensor& av = node(n.a).val;
        const Tensor& bv = node(n.b).val;
        if (wants(n.a)) {
            Tensor& da = grad_buf(n.a);
            if (!n.trans_a && !n.trans_b) matmul_acc(da, g, false, bv, true);
            else if (!n.trans_a && n.trans_b) matmul_acc(da, g, false, bv, false);
            else if (n.trans_a && !n.trans_b) matmul_acc(da, bv, false, g, true);
            else matmul_acc(da, bv, true, g, true);
        }
        if (wants(n.b)) {
            Tensor& db = grad_buf(n.b);
            if (!n.trans_a && !n.trans_b) matmul_acc(db, av, true, g, false);
            else if (!n.trans_a && n.trans_b) matmul_acc(db, g, true, av, false);
            else if (n.trans_a && !n.trans_b) matmul_acc(db, av, false, g, false);
            else matmul_acc(db, g, true, av, true);
        }
        break;
    }
    case Op::AddBias: {
        if (wants(n.a)) accumulate(n.a, g);
        if (wants(n.b)) {
            Tensor& db = grad_buf(n.b);
            const int r = g.rows(), c = g.cols();
            for (int ir = 0; ir < r; ++ir)
                for (int jc = 0; jc < c; ++jc) db.v[static_cast<size_t>(jc)] += g.at(ir, jc);
        }
        break;
    }
    case Op::Add:
        if (wants(n.a)) accumulate(n.a, g);
        if (wants(n.b)) accumulate(n.b, g);
        break;
    case Op::Sub: {
        if (wants(n.a)) accumulate(n.a, g);
        if (wants(n.b)) {
            Tensor& db = grad_buf(n.b);
            for (int64_t k = 0; k < db.size(); ++k) db.v[k] -= g.v[k];
        }
        break;
    }
    case Op::Mul: {
        const Tensor& av = node(n.a).val;
        const Tensor& bv = node(n.b).val;
        if (wants(n.a)) {
            Tensor& da = grad_buf(n.a);
            for (int64_t k = 0; k < da.size(); ++k) da.v[k] += g.v[k] * bv.v[k];
        }
        if (wants(n.b)) {
            Tensor& db = grad_buf(n.b);
            for (int64_t k = 0; k < db.size(); ++k) db.v[k] += g.v[k] * av.v[k];
        }
        break;
    }
    case Op::Relu: {
        if (wants(n.a)) {
            const Tensor& xv = node(n.a).val;
            Tensor& dx = grad_buf(n.a);
            for (int64_t k = 0; k < dx.size(); ++k)
                if (xv.v[k] > 0.0) dx.v[k] += g.v[k];
        }
        break;
    }
    case Op::SoftmaxRows: {
        if (wants(n.a)) {
            const Tensor& p = n.val;
            Tensor& dx = grad_buf(n.a);
            const int r = p.rows(), c = p.cols();
            for (int ir = 0; ir < r; ++ir) {
                double dot = 0.0;
                for (int jc = 0; jc < c; ++jc) dot += g.at(ir, jc) * p.at(ir, jc);
                for (int jc = 0; jc < c; ++jc)
                    dx.at(ir, jc) += p.at(ir, jc) * (g.at(ir, jc) - dot);
            }
        }
        break;
    }
    case Op::LogSoftmaxRows: {
        if (wants(n.a)) {
            const Tensor& y = n.val;
            Tensor& dx = grad_buf(n.a);
            const int r = y.rows(), c = y.cols();
            for (int ir = 0; ir < r; ++ir) {
                double gs = 0.0;
                for (int jc = 0; jc < c; ++jc) gs += g.at(ir, jc);
                for (int jc = 0; jc < c; ++jc)
                    dx.at(ir, jc) += g.at(ir, jc) - std::exp(y.at(ir, jc)) * gs;
            }
        }
        break;
    }
    case Op::XLogX: {
        if (wants(n.a)) {
            const Tensor& xv = node(n.a).val;
            Tensor& dx = grad_buf(n.a);
            for (int64_t k = 0; k < dx.size(); ++k)
                if (xv.v[k] != 0.0) dx.v[k] += g.v[k] * (std::log(xv.v[k]) + 1.0);
        }
        break;
    }
    case Op::GatherCols: {
        if (wants(n.a)) {
            Tensor& dx = grad_buf(n.a);
            for (size_t r = 0; r < n.idx.size(); ++r)
                dx.at(static_cast<int>(r), n.idx[r]) += g.v[r];
        }
        break;
    }
    case Op::SliceRows: {
        if (wants(n.a)) {
            Tensor& dx = grad_buf(n.a);
            const int c = dx.cols();
            for (int64_t k = 0; k < g.size(); ++k)
                dx.v[static_cast<size_t>(n.row0) * c + k] += g.v[k];
        }
        break;
    }
    case Op::Sum: {
        if (wants(n.a)) {
            Tensor& dx = grad_buf(n.a);
            for (double& v : dx.v) v += g.v[0];
        }
        break;
    }
    case Op::SumRows: {
        if (wants(n.a)) {
            Tensor& dx = grad_buf(n.a);
            const int r = dx.rows(), c = dx.cols();
            for (int ir = 0; ir < r; ++ir)
                for (int jc = 0; jc < c; ++jc) dx.at(ir, jc) += g.v[static_cast<size_t>(ir)];
        }
        break;
    }
    case Op::AddScalar:
        if (wants(n.a)) accumulate(n.a, g);
        break;
    case Op::MulScalar: {
        if (wants(n.a)) {
            Tensor& dx = grad_buf(n.a);
            for (int64_t k = 0; k < dx.size(); ++k) dx.v[k] += n.scalar * g.v[k];
        }
        break;
    }
    case Op::Reshape: {
        if (wants(n.a)) {
            Tensor& dx = grad_buf(n.a);
            for (int64_t k = 0; k < dx.size(); ++k) dx.v[k] += g.v[k];
        }
        break;
    }
    }
}

void Tape::clear() {
    nodes_.clear();
    backward_done_ = false;
}

} // namespace hsac
