#include "wmdd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "wmdd/errors.hpp"

namespace wmdd {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive");
  }
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive");
  }
  if (data.size() != shape_size(shape)) {
    throw ShapeError("tensor data length does not match its shape");
  }
}

std::size_t Tensor::row_size() const {
  return shape.empty() ? 1 : data.size() / shape.front();
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t n = row_size();
  return {data.data() + i * n, n};
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t n = row_size();
  return {data.data() + i * n, n};
}

void Tensor::fill(double value) { std::fill(data.begin(), data.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("gather_rows: empty index set");
  Shape shape = t.shape;
  shape.front() = indices.size();
  Tensor out(shape);
  const std::size_t n = t.row_size();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= t.dim(0)) throw ShapeError("gather_rows: index out of range");
    auto src = t.row(indices[r]);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  return out;
}

}  // namespace wmdd
