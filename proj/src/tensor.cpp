#include "navrep/tensor.hpp"

#include <sstream>
#include <stdexcept>

#include "navrep/kernels.hpp"

namespace navrep {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape.empty() || shape.size() > 2) throw std::invalid_argument("Tensor rank must be 1 or 2");
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("Tensor data length does not match shape");
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::vec(std::vector<double> d) {
    auto n = static_cast<std::int64_t>(d.size());
    return Tensor({n}, std::move(d));
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data.size()); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

void Tensor::fill(double v) {
    for (auto& x : data) x = v;
}

bool Tensor::all_finite() const { return kern::all_finite(data.size(), data.data()); }

}  // namespace navrep
