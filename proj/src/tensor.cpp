#include "refpaint/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "refpaint/error.hpp"
#include "refpaint/rng.hpp"

namespace refpaint {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        require(d >= 0, ErrorKind::shape, "negative dimension");
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(static_cast<std::int64_t>(data_.size()) == shape_numel(shape_), ErrorKind::shape,
            "tensor data size does not match shape " + shape_str(shape_));
}

Tensor Tensor::normal(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) {
        v = rng.normal();
    }
    return t;
}

std::int64_t Tensor::dim(int i) const {
    require(i >= 0 && i < rank(), ErrorKind::shape, "dimension index out of range");
    return shape_[static_cast<std::size_t>(i)];
}

double& Tensor::at(std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
}

double Tensor::at(std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
}

Tensor Tensor::reshaped(Shape shape) const& {
    return Tensor(*this).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    require(shape_numel(shape) == static_cast<std::int64_t>(data_.size()), ErrorKind::shape,
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    shape_ = std::move(shape);
    return std::move(*this);
}

Tensor Tensor::slice0(std::int64_t index) const {
    require(rank() >= 1 && index >= 0 && index < shape_[0], ErrorKind::shape, "slice0 out of range");
    Shape sub(shape_.begin() + 1, shape_.end());
    const auto n = static_cast<std::size_t>(shape_numel(sub));
    const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(index));
    return Tensor(std::move(sub), std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n)));
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
    require(!items.empty(), ErrorKind::shape, "stack of zero tensors");
    Shape shape = items.front().shape();
    shape.insert(shape.begin(), static_cast<std::int64_t>(items.size()));
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(shape_numel(shape)));
    for (const auto& t : items) {
        require(t.shape() == items.front().shape(), ErrorKind::shape, "stack: mismatched shapes");
        data.insert(data.end(), t.storage().begin(), t.storage().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    require(a.shape() == b.shape(), ErrorKind::shape,
            std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace refpaint
