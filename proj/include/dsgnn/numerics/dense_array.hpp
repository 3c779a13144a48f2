#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dsgnn/errors.hpp"

namespace dsgnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array of doubles. Rank 0 is a scalar.
/// Storage is always aligned to Eigen's vector width: Eigen peels loops by the address
/// of the first element, so unaligned buffers would make sums depend on where the heap
/// put them and reruns would not be bit-identical.
class DenseArray {
public:
    using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

    DenseArray() = default;

    explicit DenseArray(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_shape();
    }

    DenseArray(Shape shape, const std::vector<double>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        check_shape();
        if (data_.size() != shape_size(shape_)) {
            throw DimensionError("DenseArray: shape " + shape_string(shape_) + " needs " +
                                 std::to_string(shape_size(shape_)) + " values, got " +
                                 std::to_string(data_.size()));
        }
    }

    static DenseArray scalar(double v) { return DenseArray(Shape{}, std::vector<double>{v}); }

    static DenseArray matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return DenseArray(Shape{rows, cols}, std::move(data));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) {
            throw DimensionError("DenseArray: axis " + std::to_string(axis) + " out of range for " +
                                 shape_string(shape_));
        }
        return shape_[axis];
    }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

    double item() const {
        if (data_.size() != 1) throw DimensionError("DenseArray::item on " + shape_string(shape_));
        return data_[0];
    }

    DenseArray reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw DimensionError("reshape: cannot view " + shape_string(shape_) + " as " + shape_string(shape));
        }
        DenseArray out;
        out.shape_ = std::move(shape);
        out.data_ = data_;
        return out;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    bool same_shape(const DenseArray& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const DenseArray& a, const DenseArray& b) = default;

private:
    void check_shape() const {
        for (auto d : shape_) {
            if (d == 0) throw DimensionError("DenseArray: zero extent in shape " + shape_string(shape_));
        }
    }

    Shape shape_;
    Storage data_;
};

inline double max_abs_diff(const DenseArray& a, const DenseArray& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace dsgnn
