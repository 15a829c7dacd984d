// SPDX-License-Identifier: Apache-2.0
#include "mopd/numerics/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace mopd::numerics {

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
        }
        n *= e;
    }
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape))
{
    values_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape))
    , values_(std::move(values))
{
    if (values_.size() != shape_numel(shape_)) {
        throw ShapeError("value count " + std::to_string(values_.size()) +
                         " does not match shape " + shape_string(shape_));
    }
}

std::size_t Tensor::rows() const noexcept
{
    if (shape_.size() < 2) {
        return shape_.empty() ? 0 : 1;
    }
    return values_.size() / shape_.back();
}

std::size_t Tensor::cols() const noexcept
{
    return shape_.empty() ? 0 : shape_.back();
}

void Tensor::ensure_grad()
{
    if (grad_.size() != values_.size()) {
        grad_.assign(values_.size(), 0.0);
    }
}

void Tensor::zero_grad()
{
    if (!grad_.empty()) {
        std::fill(grad_.begin(), grad_.end(), 0.0);
    }
}

} // namespace mopd::numerics
