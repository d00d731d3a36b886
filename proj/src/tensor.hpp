#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mnif {

// Shape mismatch between operands; message names both shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A precondition of an operation was violated by the caller.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite value; message names the step.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

// Dense row-major float32 tensor. Values are immutable by convention once a
// tensor has been handed to the graph; mutation is reserved for optimizer
// state and buffers under construction.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}
    Tensor(Shape shape, std::vector<float> data);

    static Tensor scalar(float v) { return Tensor({1}, {v}); }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, float v);

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }

    // Rank-2 accessors.
    int64_t rows() const { return shape_.at(0); }
    int64_t cols() const { return shape_.at(1); }

    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }
    float& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    std::string shape_string() const { return shape_str(shape_); }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_;
    std::vector<float> data_;
};

// Eager kernels shared by the graph engine, optimizers and tests. matmul
// accumulates in double and rounds once per output element.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace mnif
