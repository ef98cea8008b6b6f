#include "svfm/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "svfm/errors.hpp"

namespace svfm {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size()) {
        throw ShapeError("Tensor: shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Tensor::matrix: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 2) return shape_[0];
    if (shape_.size() == 1) return 1;
    if (shape_.empty()) return 1;
    throw ShapeError("Tensor::rows: rank " + std::to_string(shape_.size()) + " tensor");
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 2) return shape_[1];
    if (shape_.size() == 1) return shape_[0];
    if (shape_.empty()) return 1;
    throw ShapeError("Tensor::cols: rank " + std::to_string(shape_.size()) + " tensor");
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("Tensor::item: tensor has shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::row(std::size_t r) const {
    const std::size_t c = cols();
    if (r >= rows()) throw ShapeError("Tensor::row: index out of range");
    return Tensor(Shape{1, c}, std::vector<double>(data_.begin() + r * c, data_.begin() + (r + 1) * c));
}

}  // namespace svfm
