#include "fcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fcn/errors.hpp"

namespace fcn {

namespace {

std::size_t checked_volume(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > 3) {
        throw ShapeError("tensor rank must be 1..3, got rank " + std::to_string(shape.size()));
    }
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be nonzero");
        n *= d;
    }
    return n;
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_mismatch(op, a, b);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_volume(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_volume(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
    }
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) out << 'x';
        out << shape_[i];
    }
    out << ']';
    return out.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a, b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a(i, kk);
            if (aik == 0.0) continue;
            const double* brow = b.data() + kk * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out,
                     Tensor& grad_a, Tensor& grad_b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (grad_out.rank() != 2 || grad_out.dim(0) != m || grad_out.dim(1) != n) {
        shape_mismatch("matmul_backward", a, grad_out);
    }
    require_same_shape("matmul_backward grad_a", a, grad_a);
    require_same_shape("matmul_backward grad_b", b, grad_b);
    // grad_a += g * b^T
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double* grow = grad_out.data() + i * n;
            const double* brow = b.data() + kk * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            grad_a(i, kk) += acc;
        }
    }
    // grad_b += a^T * g
    for (std::size_t kk = 0; kk < k; ++kk) {
        for (std::size_t i = 0; i < m; ++i) {
            const double aik = a(i, kk);
            if (aik == 0.0) continue;
            const double* grow = grad_out.data() + i * n;
            double* brow = grad_b.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
        }
    }
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    require_same_shape("relu_backward", x, grad_out);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        if (v >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    return out;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
    require_same_shape("sigmoid_backward", y, grad_out);
    Tensor out(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * (1.0 - y[i]) * grad_out[i];
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("softmax_rows: expected rank 2, got " + x.shape_str());
    const std::size_t m = x.dim(0), n = x.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data() + i * n;
        double* orow = out.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (std::size_t j = 0; j < n; ++j) orow[j] /= sum;
    }
    return out;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_out) {
    require_same_shape("softmax_rows_backward", y, grad_out);
    const std::size_t m = y.dim(0), n = y.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* yrow = y.data() + i * n;
        const double* grow = grad_out.data() + i * n;
        double* orow = out.data() + i * n;
        double inner = 0.0;
        for (std::size_t j = 0; j < n; ++j) inner += grow[j] * yrow[j];
        for (std::size_t j = 0; j < n; ++j) orow[j] = yrow[j] * (grow[j] - inner);
    }
    return out;
}

Tensor conv_window(const Tensor& z, const Tensor& filter) {
    if (z.rank() != 3 || filter.rank() != 3) {
        shape_mismatch("conv_window", z, filter);
    }
    const std::size_t channels = z.dim(0), rows = z.dim(1), width = z.dim(2);
    const std::size_t h = filter.dim(1);
    if (filter.dim(0) != channels || filter.dim(2) != width || h > rows) {
        shape_mismatch("conv_window", z, filter);
    }
    const std::size_t out_len = rows - h + 1;
    Tensor out({out_len});
    for (std::size_t t = 0; t < out_len; ++t) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const double* zbase = z.data() + (c * rows + t) * width;
            const double* fbase = filter.data() + c * h * width;
            for (std::size_t i = 0; i < h * width; ++i) acc += zbase[i] * fbase[i];
        }
        out[t] = acc;
    }
    return out;
}

void conv_window_backward(const Tensor& z, const Tensor& filter, const Tensor& grad_out,
                          Tensor& grad_z, Tensor& grad_filter) {
    const std::size_t channels = z.dim(0), rows = z.dim(1), width = z.dim(2);
    const std::size_t h = filter.dim(1);
    const std::size_t out_len = rows - h + 1;
    if (grad_out.rank() != 1 || grad_out.dim(0) != out_len) {
        shape_mismatch("conv_window_backward", z, grad_out);
    }
    require_same_shape("conv_window_backward grad_z", z, grad_z);
    require_same_shape("conv_window_backward grad_filter", filter, grad_filter);
    for (std::size_t t = 0; t < out_len; ++t) {
        const double g = grad_out[t];
        if (g == 0.0) continue;
        for (std::size_t c = 0; c < channels; ++c) {
            const double* zbase = z.data() + (c * rows + t) * width;
            const double* fbase = filter.data() + c * h * width;
            double* gzbase = grad_z.data() + (c * rows + t) * width;
            double* gfbase = grad_filter.data() + c * h * width;
            for (std::size_t i = 0; i < h * width; ++i) {
                gzbase[i] += g * fbase[i];
                gfbase[i] += g * zbase[i];
            }
        }
    }
}

MaxPool maxpool_positions(const Tensor& v) {
    if (v.rank() != 1 || v.size() == 0) {
        throw ShapeError("maxpool_positions: expected nonempty rank-1 tensor, got " +
                         v.shape_str());
    }
    MaxPool out{v[0], 0};
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > out.value) {
            out.value = v[i];
            out.index = i;
        }
    }
    return out;
}

void maxpool_backward(const MaxPool& pooled, double grad_out, Tensor& grad_v) {
    grad_v[pooled.index] += grad_out;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape("dot", a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
    require_same_shape("axpy", x, y);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double squared_norm(const Tensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
    return acc;
}

Tensor transpose(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + m.shape_str());
    Tensor out({m.dim(1), m.dim(0)});
    for (std::size_t i = 0; i < m.dim(0); ++i)
        for (std::size_t j = 0; j < m.dim(1); ++j) out(j, i) = m(i, j);
    return out;
}

}  // namespace fcn
