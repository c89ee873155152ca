#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fedd2s {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Batched tensors carry the batch as dim 0.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    /// Leading dimension; the batch size for batched tensors.
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    /// Number of elements per leading-dimension entry.
    std::size_t row_size() const;

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<double> row(std::size_t i);
    std::span<const double> row(std::size_t i) const;

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Same data, new shape of identical element count.
    Tensor reshaped(Shape shape) const;
    /// Rows `indices` of the leading dimension, in the given order.
    Tensor gather_rows(std::span<const std::size_t> indices) const;

    void fill(double value);
    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace fedd2s
