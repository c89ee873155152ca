#include "fedd2s/tensor.hpp"

#include "fedd2s/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace fedd2s {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d == 0) throw ArgumentError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) throw ArgumentError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
    if (shape_size(shape_) != data_.size()) {
        throw ArgumentError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                            shape_string(shape_));
    }
}

std::size_t Tensor::row_size() const {
    if (shape_.empty()) return 0;
    return data_.size() / shape_[0];
}

std::span<double> Tensor::row(std::size_t i) {
    const auto n = row_size();
    return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::row(std::size_t i) const {
    const auto n = row_size();
    return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw ArgumentError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw ArgumentError("gather_rows needs at least one index");
    const auto n = row_size();
    Shape shape = shape_;
    shape[0] = indices.size();
    std::vector<double> out;
    out.reserve(indices.size() * n);
    for (auto idx : indices) {
        if (idx >= rows()) throw ArgumentError("row index " + std::to_string(idx) + " out of range");
        auto r = row(idx);
        out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor(std::move(shape), std::move(out));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace fedd2s
