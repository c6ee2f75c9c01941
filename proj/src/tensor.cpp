#include "grela/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace grela {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

bool want_grad(const Tensor& t) { return g_grad_enabled && t.requires_grad; }

Tensor make_result(std::vector<int> shape, bool requires_grad) {
    return Tensor::zeros(std::move(shape), requires_grad);
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(const Tensor&)> fn) {
    if (!out.requires_grad) return;
    out.node = std::make_shared<AutogradNode>();
    out.node->parents = std::move(parents);
    out.node->backward = std::move(fn);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        throw DimError(std::string(op) + ": shape mismatch " + a.shape_str() +
                       " vs " + b.shape_str());
    }
}

void check_2d(const Tensor& a, const char* op) {
    if (a.ndim() != 2) {
        throw DimError(std::string(op) + ": expected 2-D tensor, got " + a.shape_str());
    }
}

}  // namespace

std::size_t numel_of(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimError("non-positive dimension in shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    std::size_t n = numel_of(shape);
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(n, 0.0);
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::constant(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape), false);
    std::fill(t.data->begin(), t.data->end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values,
                         bool requires_grad) {
    std::size_t n = numel_of(shape);
    if (values.size() != n) {
        throw DimError("from_data: " + std::to_string(values.size()) +
                       " values for shape of size " + std::to_string(n));
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(std::move(values));
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::item() const {
    if (size() != 1) throw ContractError("item(): tensor has " + std::to_string(size()) + " elements");
    return (*data)[0];
}

void Tensor::zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_result(a.shape, want_grad(a) || want_grad(b));
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
    attach(out, {a, b}, [](const Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        const std::size_t n2 = o.size();
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n2; ++i) (*pb.grad)[i] += (*o.grad)[i];
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_result(a.shape, want_grad(a) || want_grad(b));
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
    attach(out, {a, b}, [](const Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        const std::size_t n2 = o.size();
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i] * (*pb.data)[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n2; ++i) (*pb.grad)[i] += (*o.grad)[i] * (*pa.data)[i];
    });
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = make_result(a.shape, want_grad(a));
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * s;
    attach(out, {a}, [s](const Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        const std::size_t n2 = o.size();
        for (std::size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i] * s;
    });
    return out;
}

// ---- linear algebra --------------------------------------------------------

namespace {

// c[m×n] += a[m×k]·b[k×n], row-major, j-innermost so the compiler can vectorize
void gemm_acc(int m, int k, int n, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * static_cast<std::size_t>(k);
        double* crow = c + static_cast<std::size_t>(i) * static_cast<std::size_t>(n);
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(kk) * static_cast<std::size_t>(n);
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m×k] += a[m×n]·bᵀ where b is [k×n]
void gemm_nt_acc(int m, int n, int k, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * static_cast<std::size_t>(n);
        double* crow = c + static_cast<std::size_t>(i) * static_cast<std::size_t>(k);
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * static_cast<std::size_t>(n);
            double acc = 0.0;
            for (int t = 0; t < n; ++t) acc += arow[t] * brow[t];
            crow[j] += acc;
        }
    }
}

// c[k×n] += aᵀ·b where a is [m×k], b is [m×n]
void gemm_tn_acc(int m, int k, int n, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * static_cast<std::size_t>(k);
        const double* brow = b + static_cast<std::size_t>(i) * static_cast<std::size_t>(n);
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(kk) * static_cast<std::size_t>(n);
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    if (a.shape[1] != b.shape[0]) {
        throw DimError("matmul: inner dimensions disagree, " + a.shape_str() +
                       " vs " + b.shape_str());
    }
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out = make_result({m, n}, want_grad(a) || want_grad(b));
    gemm_acc(m, k, n, a.data->data(), b.data->data(), out.data->data());
    attach(out, {a, b}, [m, k, n](const Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        if (pa.requires_grad)
            gemm_nt_acc(m, n, k, o.grad->data(), pb.data->data(), pa.grad->data());
        if (pb.requires_grad)
            gemm_tn_acc(m, k, n, pa.data->data(), o.grad->data(), pb.grad->data());
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    check_2d(a, "transpose");
    const int m = a.shape[0], n = a.shape[1];
    Tensor out = make_result({n, m}, want_grad(a));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    attach(out, {a}, [m, n](const Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                (*pa.grad)[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] +=
                    (*o.grad)[static_cast<std::size_t>(j) * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)];
    });
    return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (numel_of(shape) != a.size()) {
        throw DimError("reshape: cannot view " + a.shape_str() + " as " +
                       Tensor::zeros(shape).shape_str());
    }
    Tensor out;
    out.shape = std::move(shape);
    out.data = a.data;  // share values
    out.requires_grad = want_grad(a);
    if (out.requires_grad) {
        out.grad = std::make_shared<std::vector<double>>(a.size(), 0.0);
        attach(out, {a}, [](const Tensor& o) {
            const Tensor& pa = o.node->parents[0];
            if (!pa.requires_grad) return;
            const std::size_t n = o.size();
            for (std::size_t i = 0; i < n; ++i) (*pa.grad)[i] += (*o.grad)[i];
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    check_2d(table, "gather_rows");
    const int rows = table.shape[0], cols = table.shape[1];
    for (int id : ids) {
        if (id < 0 || id >= rows) {
            throw InputError("gather_rows: row " + std::to_string(id) +
                             " out of range for table " + table.shape_str());
        }
    }
    Tensor out = make_result({static_cast<int>(ids.size()), cols}, want_grad(table));
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < cols; ++j)
            out.at(static_cast<int>(i), j) = table.at(ids[i], j);
    attach(out, {table}, [ids, cols](const Tensor& o) {
        const Tensor& pt = o.node->parents[0];
        if (!pt.requires_grad) return;
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < cols; ++j)
                (*pt.grad)[static_cast<std::size_t>(ids[i]) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)] +=
                    (*o.grad)[i * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
    });
    return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    check_2d(x, "add_row_bias");
    if (bias.ndim() != 1 || bias.shape[0] != x.shape[1]) {
        throw DimError("add_row_bias: bias " + bias.shape_str() + " vs rows of " + x.shape_str());
    }
    const int m = x.shape[0], n = x.shape[1];
    Tensor out = make_result(x.shape, want_grad(x) || want_grad(bias));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) + bias.at(static_cast<std::size_t>(j));
    attach(out, {x, bias}, [m, n](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        if (px.requires_grad) {
            const std::size_t sz = o.size();
            for (std::size_t i = 0; i < sz; ++i) (*px.grad)[i] += (*o.grad)[i];
        }
        if (pb.requires_grad) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    (*pb.grad)[static_cast<std::size_t>(j)] += (*o.grad)[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
        }
    });
    return out;
}

Tensor mul_row_broadcast(const Tensor& x, const Tensor& v) {
    check_2d(x, "mul_row_broadcast");
    if (v.ndim() != 1 || v.shape[0] != x.shape[1]) {
        throw DimError("mul_row_broadcast: vector " + v.shape_str() + " vs rows of " + x.shape_str());
    }
    const int m = x.shape[0], n = x.shape[1];
    Tensor out = make_result(x.shape, want_grad(x) || want_grad(v));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) * v.at(static_cast<std::size_t>(j));
    attach(out, {x, v}, [m, n](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        const Tensor& pv = o.node->parents[1];
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                const double g = (*o.grad)[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
                if (px.requires_grad)
                    (*px.grad)[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] += g * (*pv.data)[static_cast<std::size_t>(j)];
                if (pv.requires_grad)
                    (*pv.grad)[static_cast<std::size_t>(j)] += g * (*px.data)[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
            }
        }
    });
    return out;
}

Tensor mean_rows(const Tensor& x) {
    check_2d(x, "mean_rows");
    const int m = x.shape[0], n = x.shape[1];
    Tensor out = make_result({1, n}, want_grad(x));
    // Each column is accumulated in value-sorted order so the mean depends
    // only on the multiset of entries, never on row order — reordering rows
    // leaves the result bit-identical.
    std::vector<double> col(static_cast<std::size_t>(m));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < m; ++i) col[static_cast<std::size_t>(i)] = x.at(i, j);
        std::sort(col.begin(), col.end());
        double acc = 0.0;
        for (double v : col) acc += v;
        out.at(0, j) = acc / m;
    }
    attach(out, {x}, [m, n](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                (*px.grad)[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] += (*o.grad)[static_cast<std::size_t>(j)] / m;
    });
    return out;
}

Tensor sum_all(const Tensor& x) {
    Tensor out = make_result({1}, want_grad(x));
    double acc = 0.0;
    for (double v : *x.data) acc += v;
    (*out.data)[0] = acc;
    attach(out, {x}, [](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const double g = (*o.grad)[0];
        for (double& gv : *px.grad) gv += g;
    });
    return out;
}

// ---- nonlinearities --------------------------------------------------------

double gelu_scalar(double x) { return x * 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor gelu(const Tensor& x) {
    Tensor out = make_result(x.shape, want_grad(x));
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = gelu_scalar((*x.data)[i]);
    attach(out, {x}, [](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const std::size_t n2 = o.size();
        for (std::size_t i = 0; i < n2; ++i) {
            const double v = (*px.data)[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            (*px.grad)[i] += (*o.grad)[i] * (cdf + v * pdf);
        }
    });
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = make_result(x.shape, want_grad(x));
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = sigmoid_scalar((*x.data)[i]);
    attach(out, {x}, [](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const std::size_t n2 = o.size();
        for (std::size_t i = 0; i < n2; ++i) {
            const double s = (*o.data)[i];
            (*px.grad)[i] += (*o.grad)[i] * s * (1.0 - s);
        }
    });
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    check_2d(x, "softmax_rows");
    const int m = x.shape[0], n = x.shape[1];
    Tensor out = make_result(x.shape, want_grad(x));
    for (int i = 0; i < m; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            const double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= denom;
    }
    attach(out, {x}, [m, n](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += o.at(i, j) * (*o.grad)[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
            for (int j = 0; j < n; ++j) {
                const std::size_t idx = static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j);
                (*px.grad)[idx] += o.at(i, j) * ((*o.grad)[idx] - dot);
            }
        }
    });
    return out;
}

Tensor normalize_sum(const Tensor& x, double eps) {
    Tensor out = make_result(x.shape, want_grad(x));
    double s = 0.0;
    for (double v : *x.data) s += v;
    const double denom = s + eps;
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*x.data)[i] / denom;
    attach(out, {x}, [denom](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const std::size_t n2 = o.size();
        double gdotx = 0.0;
        for (std::size_t i = 0; i < n2; ++i) gdotx += (*o.grad)[i] * (*px.data)[i];
        for (std::size_t i = 0; i < n2; ++i)
            (*px.grad)[i] += (*o.grad)[i] / denom - gdotx / (denom * denom);
    });
    return out;
}

Tensor clamp_max(const Tensor& x, double cap) {
    Tensor out = make_result(x.shape, want_grad(x));
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::min((*x.data)[i], cap);
    attach(out, {x}, [cap](const Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const std::size_t n2 = o.size();
        for (std::size_t i = 0; i < n2; ++i)
            if ((*px.data)[i] <= cap) (*px.grad)[i] += (*o.grad)[i];
    });
    return out;
}

Tensor bce(const Tensor& pred, const Tensor& target, double eps) {
    check_same_shape(pred, target, "bce");
    const std::size_t n = pred.size();
    Tensor out = make_result({1}, want_grad(pred) || want_grad(target));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = (*pred.data)[i];
        const double t = (*target.data)[i];
        acc -= t * std::log(p + eps) + (1.0 - t) * std::log(1.0 - p + eps);
    }
    (*out.data)[0] = acc / static_cast<double>(n);
    attach(out, {pred, target}, [eps, n](const Tensor& o) {
        const Tensor& pp = o.node->parents[0];
        const Tensor& pt = o.node->parents[1];
        const double g = (*o.grad)[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = (*pp.data)[i];
            const double t = (*pt.data)[i];
            if (pp.requires_grad)
                (*pp.grad)[i] += g * (-(t / (p + eps)) + (1.0 - t) / (1.0 - p + eps));
            if (pt.requires_grad)
                (*pt.grad)[i] += g * (std::log(1.0 - p + eps) - std::log(p + eps));
        }
    });
    return out;
}

// ---- reverse pass ----------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + loss.shape_str());
    }
    if (!loss.requires_grad || !loss.grad) return;
    (*loss.grad)[0] += 1.0;

    // post-order over the recorded graph, iterative to keep deep chains safe
    std::vector<Tensor> tensor_order;
    std::unordered_set<AutogradNode*> seen;
    struct Frame {
        Tensor t;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (loss.node && seen.insert(loss.node.get()).second) stack.push_back({loss, 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        AutogradNode* nd = f.t.node.get();
        if (f.next_parent < nd->parents.size()) {
            const Tensor& p = nd->parents[f.next_parent];
            ++f.next_parent;
            if (p.node && seen.insert(p.node.get()).second) stack.push_back({p, 0});
        } else {
            tensor_order.push_back(f.t);
            stack.pop_back();
        }
    }

    for (auto it = tensor_order.rbegin(); it != tensor_order.rend(); ++it) {
        if (it->node && it->node->backward) it->node->backward(*it);
    }
    // release the graph
    for (Tensor& t : tensor_order) {
        if (t.node) {
            t.node->backward = nullptr;
            t.node->parents.clear();
        }
    }
}

}  // namespace grela
