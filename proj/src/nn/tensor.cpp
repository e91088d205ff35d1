#include "uavsim/nn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace uavsim::nn {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimension must be positive");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}
}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  const std::size_t n = product(shape);
  t.shape = std::move(shape);
  t.data.assign(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.data) v = value;
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (product(shape) != values.size())
    throw DimensionError("tensor data size does not match shape " +
                         shape_str(shape));
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (product(new_shape) != numel())
    throw DimensionError("reshape " + shape_str(shape) + " -> " +
                         shape_str(new_shape) + " changes element count");
  Tensor t;
  t.shape = std::move(new_shape);
  t.data = data;
  return t;
}

void Tensor::require_finite(const char* what) const {
  for (double v : data) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value in ") + what);
  }
}

void require_shape(const Tensor& t, std::vector<std::size_t> shape,
                   const char* what) {
  if (t.shape != shape)
    throw DimensionError(std::string(what) + ": expected shape " +
                         shape_str(shape) + ", got " + shape_str(t.shape));
}

}  // namespace uavsim::nn
