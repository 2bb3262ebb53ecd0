#pragma once

#include <cstddef>

// Data-parallel inner loops used by the network engine, the optimizers and
// server-side aggregation. Every operation has a scalar reference
// implementation and (on x86-64) an AVX2 variant selected at runtime.
//
// Equivalence contract, checked by tests/test_kernels.cpp:
//   * elementwise ops, matmul and matmul_tn accumulate per output element in
//     the same order in both variants and must agree bitwise,
//   * dot, sum_all and matmul_nt use lane accumulators in the AVX2 variant
//     and agree with the scalar reference to ~1e-15 relative.
// Within one process the active table is fixed, so runs are deterministic
// regardless of which variant is selected.

namespace fedbench::kernels {

struct Ops {
    const char* name;

    // y[i] = a[i] + b[i]; y[i] = a[i] - b[i]
    void (*add)(const double* a, const double* b, double* y, std::size_t n);
    void (*sub)(const double* a, const double* b, double* y, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x[i] *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    // g[i] += mu * (w[i] - anchor[i])   (proximal / Ditto penalty gradient)
    void (*prox_acc)(double mu, const double* w, const double* anchor, double* g,
                     std::size_t n);

    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum_all)(const double* x, std::size_t n);

    // C[m x n] = A[m x k] * B[k x n], row-major, C overwritten.
    void (*matmul)(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);
    // C[m x n] = A^T * B with A[k x m], B[k x n].
    void (*matmul_tn)(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t k, std::size_t n);
    // C[m x n] = A * B^T with A[m x k], B[n x k].
    void (*matmul_nt)(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t k, std::size_t n);

    void (*relu)(const double* x, double* y, std::size_t n);
    // dx[i] = pre[i] > 0 ? dy[i] : 0
    void (*relu_backward)(const double* pre, const double* dy, double* dx,
                          std::size_t n);

    // p[i] -= lr * g[i]
    void (*sgd_step)(double* p, const double* g, double lr, std::size_t n);
    // p[i] -= lr * (g[i] - ci[i] + c[i])   (control-variate corrected SGD)
    void (*scaffold_step)(double* p, const double* g, const double* ci,
                          const double* c, double lr, std::size_t n);
    // Decoupled-weight-decay Adam step. bc1 = 1/(1-beta1^t), bc2 = 1/(1-beta2^t)
    // are precomputed by the caller so the kernel stays elementwise.
    void (*adamw_step)(double* p, double* m, double* v, const double* g, double lr,
                       double beta1, double beta2, double eps, double weight_decay,
                       double bc1, double bc2, std::size_t n);

    // acc[i] += w * x[i]   (weighted parameter averaging)
    void (*weighted_acc)(double w, const double* x, double* acc, std::size_t n);
};

// Scalar reference table; always available.
const Ops& scalar_ops();

// AVX2 table, or nullptr when not compiled in / not supported by this CPU.
const Ops* avx2_ops();

// Table used by the rest of the library. Picks the widest supported variant
// once per process; FEDBENCH_KERNELS=scalar|avx2 overrides the choice.
const Ops& active();

}  // namespace fedbench::kernels
