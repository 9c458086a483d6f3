// Small row-major dense matrix used throughout the library. Double precision
// everywhere: the toy scale makes memory a non-issue and the analysis
// contracts are tight (1e-9 oracle equality).
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace halluscope {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    bool empty() const { return data.empty(); }
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    std::span<double> row_span(int r) { return {row(r), static_cast<size_t>(cols)}; }
    std::span<const double> row_span(int r) const { return {row(r), static_cast<size_t>(cols)}; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// y = W * x with W of shape (out, in).
inline void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
    if (static_cast<int>(x.size()) != w.cols || static_cast<int>(y.size()) != w.rows)
        throw std::invalid_argument("matvec: dimension mismatch");
    for (int r = 0; r < w.rows; ++r) y[r] = dot({w.row(r), static_cast<size_t>(w.cols)}, x);
}

inline std::vector<double> matvec(const Matrix& w, std::span<const double> x) {
    std::vector<double> y(w.rows);
    matvec(w, x, y);
    return y;
}

/// In-place numerically stable softmax (max subtraction).
inline void softmax_inplace(std::span<double> v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : v) x /= sum;
}

inline std::vector<double> softmax(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    softmax_inplace(out);
    return out;
}

/// Index of the maximum element, lowest index on ties.
inline int argmax(std::span<const double> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace halluscope
