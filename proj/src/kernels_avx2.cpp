// AVX2 kernel variants. Compiled with -mavx2 on x86-64 only; the dispatcher
// checks CPU support at runtime before handing out this table.

#include "fedbench/kernels.hpp"

#ifdef FEDBENCH_HAVE_AVX2

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace fedbench::kernels {
namespace {

inline double hsum(__m256d acc) {
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    __m128d s2 = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(s2, s2);
    return _mm_cvtsd_f64(_mm_add_sd(s2, swapped));
}

void v_add(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void v_sub(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] - b[i];
}

void v_axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void v_scale(double alpha, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
    }
    for (; i < n; ++i) x[i] *= alpha;
}

void v_prox_acc(double mu, const double* w, const double* anchor, double* g,
                std::size_t n) {
    const __m256d vmu = _mm256_set1_pd(mu);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(w + i),
                                     _mm256_loadu_pd(anchor + i));
        __m256d upd = _mm256_mul_pd(vmu, diff);
        _mm256_storeu_pd(g + i, _mm256_add_pd(_mm256_loadu_pd(g + i), upd));
    }
    for (; i < n; ++i) g[i] += mu * (w[i] - anchor[i]);
}

double v_dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(
            acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double v_sum_all(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

// Broadcast-A / stream-B form: each C element accumulates over l in the same
// order as the scalar reference, so results match bitwise.
void v_matmul(const double* a, const double* b, double* c, std::size_t m,
              std::size_t k, std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const __m256d va = _mm256_set1_pd(a[i * k + l]);
            const double* brow = b + l * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
                _mm256_storeu_pd(crow + j,
                                 _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
            }
            const double ail = a[i * k + l];
            for (; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
}

void v_matmul_tn(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t l = 0; l < k; ++l) {
        const double* arow = a + l * m;
        const double* brow = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const __m256d va = _mm256_set1_pd(arow[i]);
            double* crow = c + i * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
                _mm256_storeu_pd(crow + j,
                                 _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
            }
            const double ali = arow[i];
            for (; j < n; ++j) crow[j] += ali * brow[j];
        }
    }
}

void v_matmul_nt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] = v_dot(arow, b + j * k, k);
        }
    }
}

void v_relu(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_backward(const double* pre, const double* dy, double* dx,
                     std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
    }
    for (; i < n; ++i) dx[i] = pre[i] > 0.0 ? dy[i] : 0.0;
}

void v_sgd_step(double* p, const double* g, double lr, std::size_t n) {
    const __m256d vlr = _mm256_set1_pd(lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d upd = _mm256_mul_pd(vlr, _mm256_loadu_pd(g + i));
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
    }
    for (; i < n; ++i) p[i] -= lr * g[i];
}

void v_scaffold_step(double* p, const double* g, const double* ci, const double* c,
                     double lr, std::size_t n) {
    const __m256d vlr = _mm256_set1_pd(lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d corr = _mm256_add_pd(
            _mm256_sub_pd(_mm256_loadu_pd(g + i), _mm256_loadu_pd(ci + i)),
            _mm256_loadu_pd(c + i));
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i),
                                              _mm256_mul_pd(vlr, corr)));
    }
    for (; i < n; ++i) p[i] -= lr * (g[i] - ci[i] + c[i]);
}

void v_adamw_step(double* p, double* m, double* v, const double* g, double lr,
                  double beta1, double beta2, double eps, double weight_decay,
                  double bc1, double bc2, std::size_t n) {
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vnb1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d vnb2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d vwd = _mm256_set1_pd(weight_decay);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gi = _mm256_loadu_pd(g + i);
        __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(vnb1, gi));
        __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(vnb2, _mm256_mul_pd(gi, gi)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        __m256d mhat = _mm256_mul_pd(mi, vbc1);
        __m256d vhat = _mm256_mul_pd(vi, vbc2);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        __m256d pi = _mm256_loadu_pd(p + i);
        __m256d upd = _mm256_add_pd(_mm256_div_pd(mhat, denom),
                                    _mm256_mul_pd(vwd, pi));
        _mm256_storeu_pd(p + i, _mm256_sub_pd(pi, _mm256_mul_pd(vlr, upd)));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] * bc1;
        const double vhat = v[i] * bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
    }
}

void v_weighted_acc(double w, const double* x, double* acc, std::size_t n) {
    const __m256d vw = _mm256_set1_pd(w);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(vw, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), prod));
    }
    for (; i < n; ++i) acc[i] += w * x[i];
}

constexpr Ops kAvx2Ops = {
    "avx2",       v_add,           v_sub,      v_axpy,          v_scale,
    v_prox_acc,   v_dot,           v_sum_all,  v_matmul,        v_matmul_tn,
    v_matmul_nt,  v_relu,          v_relu_backward, v_sgd_step, v_scaffold_step,
    v_adamw_step, v_weighted_acc,
};

}  // namespace

const Ops* avx2_ops_impl() { return &kAvx2Ops; }

}  // namespace fedbench::kernels

#endif  // FEDBENCH_HAVE_AVX2
