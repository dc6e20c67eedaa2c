#include "tfacm/tensor.hpp"

#include <Eigen/Dense>

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tfacm {

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;  // zero-length axes allowed (empty tensors)
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != data_.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (checked_numel(new_shape) != numel()) {
        throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " +
                                    shape_str(new_shape) + ": element counts differ");
    }
    return Tensor(std::move(new_shape), data_);
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor elementwise(const Tensor& a, const Tensor& b, BinOp op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("elementwise: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    Tensor out(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    const std::size_t n = a.numel();
    if (op == BinOp::Add) {
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("matmul: rank-2 tensors required");
    if (a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Tensor out({a.dim(0), b.dim(1)});
    Eigen::Map<RowMat>(out.data(), m, n).noalias() =
        Eigen::Map<const RowMat>(a.data(), m, k) * Eigen::Map<const RowMat>(b.data(), k, n);
    return out;
}

Tensor pad_axis(const Tensor& x, std::size_t axis, std::size_t left, std::size_t right,
                float value) {
    if (axis >= x.rank()) throw std::invalid_argument("pad_axis: axis out of range");
    std::vector<std::size_t> out_shape = x.shape();
    out_shape[axis] += left + right;
    Tensor out = Tensor::full(out_shape, value);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::size_t len = x.dim(axis);
    for (std::size_t o = 0; o < outer; ++o) {
        const float* src = x.data() + o * len * inner;
        float* dst = out.data() + (o * out_shape[axis] + left) * inner;
        std::copy(src, src + len * inner, dst);
    }
    return out;
}

Tensor slice_axis(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= x.rank()) throw std::invalid_argument("slice_axis: axis out of range");
    if (begin >= end || end > x.dim(axis)) throw std::invalid_argument("slice_axis: bad range");
    std::vector<std::size_t> out_shape = x.shape();
    out_shape[axis] = end - begin;
    Tensor out(out_shape);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::size_t len = x.dim(axis);
    for (std::size_t o = 0; o < outer; ++o) {
        const float* src = x.data() + (o * len + begin) * inner;
        float* dst = out.data() + o * out_shape[axis] * inner;
        std::copy(src, src + out_shape[axis] * inner, dst);
    }
    return out;
}

Tensor unfold_axis(const Tensor& x, std::size_t axis, std::size_t width, std::size_t stride) {
    if (axis >= x.rank()) throw std::invalid_argument("unfold_axis: axis out of range");
    const std::size_t len = x.dim(axis);
    if (width > len) {
        throw std::invalid_argument("unfold_axis: width " + std::to_string(width) +
                                    " exceeds axis length " + std::to_string(len));
    }
    if (stride < 1 || (len - width) % stride != 0) {
        throw std::invalid_argument("unfold_axis: (len - W) must be divisible by S");
    }
    const std::size_t count = (len - width) / stride + 1;

    std::vector<std::size_t> out_shape;
    out_shape.push_back(count);
    for (std::size_t i = 0; i < x.rank(); ++i) {
        out_shape.push_back(i == axis ? width : x.dim(i));
    }
    Tensor out(out_shape);

    for (std::size_t l = 0; l < count; ++l) {
        Tensor seg = slice_axis(x, axis, l * stride, l * stride + width);
        std::copy(seg.data(), seg.data() + seg.numel(), out.data() + l * seg.numel());
    }
    return out;
}

}  // namespace tfacm
