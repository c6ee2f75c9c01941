#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "grela/common.hpp"

namespace grela {

struct AutogradNode;

// Dense row-major tensor of 64-bit floats with optional reverse-mode gradient.
// Copying a Tensor copies the handle; data, grad and the autograd record are
// shared. Values are immutable after an op creates them; only grad accumulates.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::shared_ptr<AutogradNode> node;  // op that produced this tensor, if any

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor constant(std::vector<int> shape, double value);
    static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return data != nullptr; }
    std::size_t size() const { return data ? data->size() : 0; }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& at(std::size_t i) { return (*data)[i]; }
    double at(std::size_t i) const { return (*data)[i]; }
    // element of a 2-D tensor
    double& at(int r, int c) { return (*data)[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) + static_cast<std::size_t>(c)]; }
    double at(int r, int c) const { return (*data)[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) + static_cast<std::size_t>(c)]; }

    double item() const;
    double grad_at(std::size_t i) const { return (*grad)[i]; }
    void zero_grad();

    std::string shape_str() const;
};

struct AutogradNode {
    std::vector<Tensor> parents;
    // Accumulates into parents' grads, reading the output's grad.
    std::function<void(const Tensor&)> backward;
};

std::size_t numel_of(const std::vector<int>& shape);

// Thread-local gradient mode. Ops record autograd nodes only when enabled.
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---- ops -------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);       // same shape
Tensor mul(const Tensor& a, const Tensor& b);       // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);    // [m×k]·[k×n]
Tensor transpose(const Tensor& a);                  // 2-D
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor add_row_bias(const Tensor& x, const Tensor& bias);       // x[m×n] + bias[n]
Tensor mul_row_broadcast(const Tensor& x, const Tensor& v);     // x[m×n] ⊙ v[n] per row
Tensor mean_rows(const Tensor& x);                  // [m×n] -> [1×n]
Tensor sum_all(const Tensor& x);                    // -> scalar [1]
Tensor gelu(const Tensor& x);                       // x·Φ(x), exact Gaussian CDF
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);               // 2-D, row-stabilized
Tensor normalize_sum(const Tensor& x, double eps);  // x / (Σx + eps)
Tensor clamp_max(const Tensor& x, double cap);
Tensor bce(const Tensor& pred, const Tensor& target, double eps = 1e-7);

// x·W + b
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_row_bias(matmul(x, w), b);
}

// Reverse-mode pass from a scalar loss. Gradients accumulate into every
// reachable tensor with requires_grad; the recorded graph is released
// afterwards, so a second backward needs a fresh forward pass.
void backward(const Tensor& loss);

double gelu_scalar(double x);
double sigmoid_scalar(double x);

}  // namespace grela
