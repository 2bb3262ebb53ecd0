#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "fedbench/kernels.hpp"
#include "fedbench/rng.hpp"

using namespace fedbench;
namespace fk = fedbench::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Sizes straddle the 4-lane width to exercise vector body and scalar tail.
const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 13, 16, 31, 64, 67};

}  // namespace

TEST_CASE("scalar and avx2 elementwise kernels agree bitwise") {
    const fk::Ops* vec = fk::avx2_ops();
    if (vec == nullptr) {
        MESSAGE("avx2 not available on this machine; scalar-only");
        return;
    }
    const fk::Ops& ref = fk::scalar_ops();
    Rng rng(42);

    for (std::size_t n : kSizes) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);

        std::vector<double> y1(n), y2(n);
        ref.add(a.data(), b.data(), y1.data(), n);
        vec->add(a.data(), b.data(), y2.data(), n);
        CHECK(bitwise_equal(y1, y2));

        ref.sub(a.data(), b.data(), y1.data(), n);
        vec->sub(a.data(), b.data(), y2.data(), n);
        CHECK(bitwise_equal(y1, y2));

        y1 = b;
        y2 = b;
        ref.axpy(0.37, a.data(), y1.data(), n);
        vec->axpy(0.37, a.data(), y2.data(), n);
        CHECK(bitwise_equal(y1, y2));

        y1 = a;
        y2 = a;
        ref.scale(-1.73, y1.data(), n);
        vec->scale(-1.73, y2.data(), n);
        CHECK(bitwise_equal(y1, y2));

        y1 = b;
        y2 = b;
        ref.prox_acc(0.21, a.data(), b.data(), y1.data(), n);
        vec->prox_acc(0.21, a.data(), b.data(), y2.data(), n);
        CHECK(bitwise_equal(y1, y2));

        ref.relu(a.data(), y1.data(), n);
        vec->relu(a.data(), y2.data(), n);
        CHECK(bitwise_equal(y1, y2));

        ref.relu_backward(a.data(), b.data(), y1.data(), n);
        vec->relu_backward(a.data(), b.data(), y2.data(), n);
        CHECK(bitwise_equal(y1, y2));

        y1 = a;
        y2 = a;
        ref.sgd_step(y1.data(), b.data(), 0.05, n);
        vec->sgd_step(y2.data(), b.data(), 0.05, n);
        CHECK(bitwise_equal(y1, y2));

        auto ci = random_vec(rng, n);
        auto c = random_vec(rng, n);
        y1 = a;
        y2 = a;
        ref.scaffold_step(y1.data(), b.data(), ci.data(), c.data(), 0.1, n);
        vec->scaffold_step(y2.data(), b.data(), ci.data(), c.data(), 0.1, n);
        CHECK(bitwise_equal(y1, y2));

        y1 = b;
        y2 = b;
        ref.weighted_acc(0.43, a.data(), y1.data(), n);
        vec->weighted_acc(0.43, a.data(), y2.data(), n);
        CHECK(bitwise_equal(y1, y2));
    }
}

TEST_CASE("scalar and avx2 adamw kernels agree bitwise") {
    const fk::Ops* vec = fk::avx2_ops();
    if (vec == nullptr) return;
    const fk::Ops& ref = fk::scalar_ops();
    Rng rng(7);

    for (std::size_t n : kSizes) {
        auto p = random_vec(rng, n);
        auto g = random_vec(rng, n);
        auto m = random_vec(rng, n, 0.1);
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(0.0, 0.5);

        auto p1 = p, m1 = m, v1 = v;
        auto p2 = p, m2 = m, v2 = v;
        ref.adamw_step(p1.data(), m1.data(), v1.data(), g.data(), 0.01, 0.9,
                       0.999, 1e-8, 0.01, 1.0 / (1.0 - 0.9), 1.0 / (1.0 - 0.999),
                       n);
        vec->adamw_step(p2.data(), m2.data(), v2.data(), g.data(), 0.01, 0.9,
                        0.999, 1e-8, 0.01, 1.0 / (1.0 - 0.9), 1.0 / (1.0 - 0.999),
                        n);
        CHECK(bitwise_equal(p1, p2));
        CHECK(bitwise_equal(m1, m2));
        CHECK(bitwise_equal(v1, v2));
    }
}

TEST_CASE("scalar and avx2 matmul family") {
    const fk::Ops* vec = fk::avx2_ops();
    if (vec == nullptr) return;
    const fk::Ops& ref = fk::scalar_ops();
    Rng rng(123);

    const std::size_t shapes[][3] = {{1, 1, 1},  {2, 3, 4},  {4, 13, 10},
                                     {7, 5, 3},  {8, 8, 8},  {3, 10, 1},
                                     {16, 7, 9}, {5, 1, 11}, {6, 9, 2}};
    for (const auto& s : shapes) {
        const std::size_t m = s[0], k = s[1], n = s[2];
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        std::vector<double> c1(m * n), c2(m * n);

        // Same per-element accumulation order: bitwise.
        ref.matmul(a.data(), b.data(), c1.data(), m, k, n);
        vec->matmul(a.data(), b.data(), c2.data(), m, k, n);
        CHECK(bitwise_equal(c1, c2));

        auto at = random_vec(rng, k * m);
        ref.matmul_tn(at.data(), b.data(), c1.data(), m, k, n);
        vec->matmul_tn(at.data(), b.data(), c2.data(), m, k, n);
        CHECK(bitwise_equal(c1, c2));

        // Dot-product based: lane accumulators reorder the sum.
        auto bt = random_vec(rng, n * k);
        ref.matmul_nt(a.data(), bt.data(), c1.data(), m, k, n);
        vec->matmul_nt(a.data(), bt.data(), c2.data(), m, k, n);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
    }
}

TEST_CASE("scalar and avx2 reductions agree to high precision") {
    const fk::Ops* vec = fk::avx2_ops();
    if (vec == nullptr) return;
    const fk::Ops& ref = fk::scalar_ops();
    Rng rng(99);

    for (std::size_t n : kSizes) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);
        CHECK(ref.dot(a.data(), b.data(), n) ==
              doctest::Approx(vec->dot(a.data(), b.data(), n)).epsilon(1e-12));
        CHECK(ref.sum_all(a.data(), n) ==
              doctest::Approx(vec->sum_all(a.data(), n)).epsilon(1e-12));
    }
}

TEST_CASE("active table is stable within a process") {
    const fk::Ops& first = fk::active();
    const fk::Ops& second = fk::active();
    CHECK(&first == &second);
    CHECK(first.name != nullptr);
}
