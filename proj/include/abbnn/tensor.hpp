#ifndef ABBNN_TENSOR_HPP
#define ABBNN_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "abbnn/common.hpp"

namespace abbnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

// Dense row-major tensor of 64-bit reals. Training-side carrier for latent
// weights and activations; datasets use their own 32-bit storage.
class FloatTensor {
public:
    FloatTensor() = default;
    explicit FloatTensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    FloatTensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (shape_numel(shape_) != data_.size())
            throw ContractError("FloatTensor: shape product " + std::to_string(shape_numel(shape_)) +
                                " != value count " + std::to_string(data_.size()));
    }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t ndim() const { return shape_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    // Reshape without copying; total element count must be preserved.
    FloatTensor reshaped(Shape s) const {
        if (shape_numel(s) != data_.size()) throw ContractError("reshape: element count mismatch");
        FloatTensor t;
        t.shape_ = std::move(s);
        t.data_ = data_;
        return t;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

} // namespace abbnn

#endif
