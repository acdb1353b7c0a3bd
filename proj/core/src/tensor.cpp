#include "mmv/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mmv {

void fail(const std::string& what) { throw Error(what); }

void io_fail(const std::string& what) { throw IoError(what); }

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail("tensor dimension must be positive, got shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool all_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
  if (numel(shape_) != static_cast<std::int64_t>(data.size())) {
    fail("tensor shape " + shape_str(shape_) + " does not match data length " +
         std::to_string(data.size()));
  }
  data_ = std::make_shared<const std::vector<float>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<float> data(static_cast<std::size_t>(numel(shape)), 0.0f);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::vector<float> data(static_cast<std::size_t>(numel(shape)), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<float>{value}, requires_grad);
}

Tensor Tensor::from(Shape shape, std::span<const float> data, bool requires_grad) {
  return Tensor(std::move(shape), std::vector<float>(data.begin(), data.end()), requires_grad);
}

float Tensor::item() const {
  if (size() != 1) fail("item() requires a scalar tensor, got shape " + shape_str(shape_));
  return (*data_)[0];
}

}  // namespace mmv
