#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedbench {

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v)
        : rows(r), cols(c), values(std::move(v)) {
        if (values.size() != rows * cols)
            throw std::invalid_argument("Matrix: values length " +
                                        std::to_string(values.size()) +
                                        " != rows*cols " +
                                        std::to_string(rows * cols));
    }

    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    double* row(std::size_t i) { return values.data() + i * cols; }
    const double* row(std::size_t i) const { return values.data() + i * cols; }

    double* data() { return values.data(); }
    const double* data() const { return values.data(); }
    std::size_t size() const { return values.size(); }

    bool operator==(const Matrix& o) const = default;

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

}  // namespace fedbench
