#include "fedbench/kernels.hpp"

#include <cmath>
#include <cstring>

namespace fedbench::kernels {
namespace {

void s_add(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void s_axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_scale(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void s_prox_acc(double mu, const double* w, const double* anchor, double* g,
                std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) g[i] += mu * (w[i] - anchor[i]);
}

double s_dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double s_sum_all(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

// Per output element the accumulation order over l is identical to the AVX2
// variant (broadcast A, stream over contiguous rows of B).
void s_matmul(const double* a, const double* b, double* c, std::size_t m,
              std::size_t k, std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
}

void s_matmul_tn(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t l = 0; l < k; ++l) {
        const double* arow = a + l * m;
        const double* brow = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double ali = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += ali * brow[j];
        }
    }
}

void s_matmul_nt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] = s_dot(arow, b + j * k, k);
        }
    }
}

void s_relu(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_backward(const double* pre, const double* dy, double* dx,
                     std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = pre[i] > 0.0 ? dy[i] : 0.0;
}

void s_sgd_step(double* p, const double* g, double lr, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] -= lr * g[i];
}

void s_scaffold_step(double* p, const double* g, const double* ci, const double* c,
                     double lr, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] -= lr * (g[i] - ci[i] + c[i]);
}

void s_adamw_step(double* p, double* m, double* v, const double* g, double lr,
                  double beta1, double beta2, double eps, double weight_decay,
                  double bc1, double bc2, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] * bc1;
        const double vhat = v[i] * bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
    }
}

void s_weighted_acc(double w, const double* x, double* acc, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += w * x[i];
}

constexpr Ops kScalarOps = {
    "scalar",     s_add,           s_sub,      s_axpy,          s_scale,
    s_prox_acc,   s_dot,           s_sum_all,  s_matmul,        s_matmul_tn,
    s_matmul_nt,  s_relu,          s_relu_backward, s_sgd_step, s_scaffold_step,
    s_adamw_step, s_weighted_acc,
};

}  // namespace

const Ops& scalar_ops() { return kScalarOps; }

}  // namespace fedbench::kernels
