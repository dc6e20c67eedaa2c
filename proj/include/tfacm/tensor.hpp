#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace tfacm {

// Dense row-major float32 tensor. Immutable by convention once an operation
// has produced it; construction-time mutation happens through data().
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<float> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, float value);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const { return data_.size(); }

    const float* data() const { return data_.data(); }
    float* data() { return data_.data(); }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

enum class BinOp { Add, Mul };

// out[i] = op(a[i], b[i]); shapes must match exactly (no broadcasting).
Tensor elementwise(const Tensor& a, const Tensor& b, BinOp op);

// Standard matrix product for rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);

// Grows `axis` by left+right, filling new slots with `value`.
Tensor pad_axis(const Tensor& x, std::size_t axis, std::size_t left,
                std::size_t right, float value);

// Slice [begin, end) along one axis.
Tensor slice_axis(const Tensor& x, std::size_t axis, std::size_t begin,
                  std::size_t end);

// Windows of width W at stride S along `axis`; the segment index becomes a
// new leading axis. Count L = (len - W)/S + 1; (len - W) must divide by S.
Tensor unfold_axis(const Tensor& x, std::size_t axis, std::size_t width,
                   std::size_t stride);

}  // namespace tfacm
