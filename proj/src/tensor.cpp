#include "hsac/tensor.hpp"

#include <cmath>

#ifdef HSAC_USE_OPENBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace hsac {

namespace {
// Training churns through ~128 KB activation tensors, exactly glibc's mmap
// threshold; per-op mmap/munmap dominates the update cost. Keep those
// allocations in the arena, and keep BLAS single-threaded: the GEMMs here are
// too small to parallelize and worker threads run whole training runs anyway.
struct RuntimeTuning {
    RuntimeTuning() {
#ifdef __GLIBC__
        mallopt(M_MMAP_MAX, 0);
#endif
#ifdef HSAC_USE_OPENBLAS
        openblas_set_num_threads(1);
#endif
    }
};
const RuntimeTuning tuning_applied;
} // namespace

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace {

struct MatView {
    const Tensor* t;
    bool trans;
    int rows() const { return trans ? t->cols() : t->rows(); }
    int cols() const { return trans ? t->rows() : t->cols(); }
};

void check_2d(const Tensor& t, const char* who) {
    if (t.shape.size() > 2) throw std::invalid_argument(std::string(who) + ": rank > 2");
}

#ifndef HSAC_USE_OPENBLAS
// Fallback GEMM, ikj order so the inner loop streams over contiguous memory.
void gemm_naive(Tensor& c, const MatView& a, const MatView& b, double alpha) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    const double* pa = a.t->v.data();
    const double* pb = b.t->v.data();
    double* pc = c.v.data();
    const int lda = a.t->cols(), ldb = b.t->cols(), ldc = n;
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = alpha * (a.trans ? pa[p * lda + i] : pa[i * lda + p]);
            if (av == 0.0) continue;
            const double* brow = b.trans ? nullptr : pb + static_cast<size_t>(p) * ldb;
            double* crow = pc + static_cast<size_t>(i) * ldc;
            if (!b.trans) {
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * pb[static_cast<size_t>(j) * ldb + p];
            }
        }
    }
}
#endif

} // namespace

void matmul_acc(Tensor& c, const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
                double alpha) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    MatView va{&a, trans_a}, vb{&b, trans_b};
    if (va.cols() != vb.rows())
        throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape) +
                                    (trans_a ? "^T" : "") + " * " + shape_str(b.shape) +
                                    (trans_b ? "^T" : ""));
    if (c.rows() != va.rows() || c.cols() != vb.cols())
        throw std::invalid_argument("matmul: output shape mismatch");
    if (va.rows() == 0 || vb.cols() == 0 || va.cols() == 0) return;
#ifdef HSAC_USE_OPENBLAS
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, va.rows(), vb.cols(), va.cols(), alpha,
                a.v.data(), a.cols(), b.v.data(), b.cols(), 1.0, c.v.data(), c.cols());
#else
    gemm_naive(c, va, vb, alpha);
#endif
}

Tensor matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, double alpha) {
    MatView va{&a, trans_a}, vb{&b, trans_b};
    Tensor c = Tensor::zeros({va.rows(), vb.cols()});
    matmul_acc(c, a, trans_a, b, trans_b, alpha);
    return c;
}

} // namespace hsac
