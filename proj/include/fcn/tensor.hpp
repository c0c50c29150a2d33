#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fcn {

// Dense row-major tensor of 64-bit floats, rank 1 to 3. Plain value type:
// copying gives an independent tensor, so instances are safe to move between
// threads.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    double& operator()(std::size_t i) { return data_[i]; }
    double operator()(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;  // e.g. "[3x4]"

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// --- forward ops, each paired with an explicit backward rule ---

// Standard matrix product [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Accumulates grad_a += g * b^T and grad_b += a^T * g.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out,
                     Tensor& grad_a, Tensor& grad_b);

// Elementwise max(0, x).
Tensor relu(const Tensor& x);

// Gradient is masked where x <= 0. Returns a fresh tensor; caller accumulates.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

// Elementwise 1 / (1 + e^-x), computed in the sign-split stable form.
Tensor sigmoid(const Tensor& x);

// Backward through y = sigmoid(x): y * (1 - y) * g.
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);

// Softmax Jacobian-vector product through y = softmax_rows(x).
Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_out);

// Sliding full-width dot product over the attribute axis. z is [n x N_a x d]
// with items as input channels, filter is [n x h x d]; output has length
// N_a - h + 1 (stride 1, no padding).
Tensor conv_window(const Tensor& z, const Tensor& filter);

// Accumulates into both grad_z and grad_filter.
void conv_window_backward(const Tensor& z, const Tensor& filter, const Tensor& grad_out,
                          Tensor& grad_z, Tensor& grad_filter);

struct MaxPool {
    double value = 0.0;
    std::size_t index = 0;
};

// Max over a rank-1 tensor; ties break to the lowest index so the backward
// routing is deterministic.
MaxPool maxpool_positions(const Tensor& v);

// Routes the gradient to the single argmax position.
void maxpool_backward(const MaxPool& pooled, double grad_out, Tensor& grad_v);

// --- small helpers shared across modules ---

double dot(const Tensor& a, const Tensor& b);
void axpy(double alpha, const Tensor& x, Tensor& y);  // y += alpha * x
double squared_norm(const Tensor& t);
Tensor transpose(const Tensor& m);

}  // namespace fcn
