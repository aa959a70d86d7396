#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsac {

// Dense row-major tensor of doubles. Rank 1 or 2 in practice.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (static_cast<size_t>(numel(shape)) != v.size())
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static int64_t numel(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.v.assign(static_cast<size_t>(numel(s)), 0.0);
        t.shape = std::move(s);
        return t;
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }
    static Tensor vec(std::vector<double> data) {
        const int n = static_cast<int>(data.size());
        return Tensor({n}, std::move(data));
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool is2d() const { return shape.size() == 2; }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }

    bool all_finite() const;
};

// C = alpha * op(A) * op(B), where op is optional transpose. A fresh tensor is
// returned; shapes are validated. Backed by BLAS when available.
Tensor matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, double alpha = 1.0);

// C += alpha * op(A) * op(B), accumulating into an existing buffer.
void matmul_acc(Tensor& c, const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
                double alpha = 1.0);

std::string shape_str(const std::vector<int>& s);

} // namespace hsac
