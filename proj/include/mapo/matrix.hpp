#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mapo {

// Dense row-major matrix of doubles. Deliberately minimal: the policies here
// are small linear maps and everything performance-critical is a dot product.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }
};

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// A parameter (or gradient) set: one matrix per policy head.
using ParamSet = std::vector<Matrix>;

inline ParamSet zeros_like(const ParamSet& p) {
    ParamSet z;
    z.reserve(p.size());
    for (const auto& m : p) z.emplace_back(m.rows, m.cols);
    return z;
}

inline void axpy(ParamSet& y, double alpha, const ParamSet& x) {
    if (y.size() != x.size()) throw std::invalid_argument("param set shape mismatch");
    for (std::size_t h = 0; h < y.size(); ++h) {
        if (y[h].data.size() != x[h].data.size())
            throw std::invalid_argument("param set shape mismatch");
        for (std::size_t i = 0; i < y[h].data.size(); ++i) y[h].data[i] += alpha * x[h].data[i];
    }
}

inline void scale(ParamSet& p, double alpha) {
    for (auto& m : p)
        for (auto& x : m.data) x *= alpha;
}

inline double norm(const ParamSet& p) {
    double s = 0.0;
    for (const auto& m : p)
        for (double x : m.data) s += x * x;
    return std::sqrt(s);
}

inline bool all_finite(const ParamSet& p) {
    for (const auto& m : p)
        for (double x : m.data)
            if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace mapo
