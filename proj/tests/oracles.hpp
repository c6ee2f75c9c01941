#pragma once

// Independent reference implementations used to validate the library. These
// are written in the most obvious way possible (triple loops, direct formula
// transcription) so a failure points at the library, not the test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "grela/common.hpp"
#include "grela/tensor.hpp"

namespace oracle {

inline std::vector<double> rand_vec(std::size_t n, grela::Rng& rng,
                                    double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// C[m×n] = A[m×k] · B[k×n], classic triple loop.
inline std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, int m,
                                        int k, int n) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int t = 0; t < k; ++t)
                s += a[static_cast<std::size_t>(i) * k + t] *
                     b[static_cast<std::size_t>(t) * n + j];
            c[static_cast<std::size_t>(i) * n + j] = s;
        }
    return c;
}

// Row-wise softmax via direct exp/sum with max subtraction.
inline std::vector<double> naive_softmax_rows(const std::vector<double>& x,
                                              int rows, int cols) {
    std::vector<double> y(x.size());
    for (int r = 0; r < rows; ++r) {
        const double* row = x.data() + static_cast<std::size_t>(r) * cols;
        double mx = *std::max_element(row, row + cols);
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) denom += std::exp(row[c] - mx);
        for (int c = 0; c < cols; ++c)
            y[static_cast<std::size_t>(r) * cols + c] =
                std::exp(row[c] - mx) / denom;
    }
    return y;
}

// x · Φ(x) with the Gaussian CDF written via erfc for independence from the
// library's erf form.
inline double naive_gelu(double x) {
    return x * 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double naive_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Mean binary cross-entropy with the same epsilon clamping convention.
inline double naive_bce(const std::vector<double>& p,
                        const std::vector<double>& t, double eps = 1e-7) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        acc += -(t[i] * std::log(p[i] + eps) +
                 (1.0 - t[i]) * std::log(1.0 - p[i] + eps));
    return acc / static_cast<double>(p.size());
}

// Central-difference gradient of a scalar-valued function with respect to the
// storage of x. The callback must recompute the value from x's current data.
inline std::vector<double> fd_gradient(grela::Tensor& x,
                                       const std::function<double()>& value,
                                       double h = 1e-5) {
    grela::NoGradGuard ng;
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = (*x.data)[i];
        (*x.data)[i] = orig + h;
        double fp = value();
        (*x.data)[i] = orig - h;
        double fm = value();
        (*x.data)[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

// Backpropagates a freshly built loss, then compares every gradient entry of
// x against central differences. Returns the worst relative error.
inline double max_grad_err(grela::Tensor& x,
                           const std::function<grela::Tensor()>& make_loss,
                           double h = 1e-5) {
    x.zero_grad();
    grela::Tensor loss = make_loss();
    grela::backward(loss);
    std::vector<double> analytic(*x.grad);
    std::vector<double> numeric =
        fd_gradient(x, [&] { return make_loss().item(); }, h);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, rel_err(analytic[i], numeric[i]));
    return worst;
}

}  // namespace oracle
