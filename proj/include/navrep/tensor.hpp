#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace navrep {

// Dense row-major f64 array, rank 1 or 2. Rank 0 (scalar) is represented as
// shape {1}.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::int64_t> shape);
    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor vec(std::vector<double> d);

    std::int64_t numel() const;
    int rank() const { return static_cast<int>(shape.size()); }
    // Rank-2 accessors; rank-1 tensors count as a single row.
    std::int64_t rows() const { return rank() == 2 ? shape[0] : 1; }
    std::int64_t cols() const { return rank() == 2 ? shape[1] : shape[0]; }

    double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols() + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * cols() + c)]; }

    double* row_ptr(std::int64_t r) { return data.data() + r * cols(); }
    const double* row_ptr(std::int64_t r) const { return data.data() + r * cols(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;

    void fill(double v);
    bool all_finite() const;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

}  // namespace navrep
