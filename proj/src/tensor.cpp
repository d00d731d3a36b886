#include "tensor.hpp"

#include <cmath>

namespace mnif {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw ShapeError("data size " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(Shape shape, float v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expected rank-2 operands, got " + a.shape_string() + " and " + b.shape_string());
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_string() + " vs " + b.shape_string());
    const int64_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    std::vector<double> row(static_cast<size_t>(n));
    for (int64_t i = 0; i < m; ++i) {
        for (auto& x : row) x = 0.0;
        for (int64_t p = 0; p < k; ++p) {
            const double aip = a.at2(i, p);
            const float* brow = b.data().data() + p * n;
            for (int64_t j = 0; j < n; ++j) row[static_cast<size_t>(j)] += aip * brow[j];
        }
        float* crow = c.data().data() + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<float>(row[static_cast<size_t>(j)]);
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: expected rank-2 operand, got " + a.shape_string());
    const int64_t m = a.rows(), n = a.cols();
    Tensor t({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) t.at2(j, i) = a.at2(i, j);
    return t;
}

}  // namespace mnif
