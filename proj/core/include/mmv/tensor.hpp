// Dense float32 tensor value type. Data is immutable once constructed; graph
// participation is tracked by a tape node id assigned by Graph.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmv {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// File-system and file-format failures (missing, corrupt, unwritable).
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

[[noreturn]] void fail(const std::string& what);
[[noreturn]] void io_fail(const std::string& what);

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool all_finite(std::span<const float> values);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::span<const float> data, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  std::span<const float> values() const {
    return data_ ? std::span<const float>(*data_) : std::span<const float>();
  }
  float item() const;  // scalar tensors only

  bool requires_grad() const { return requires_grad_; }
  int node() const { return node_; }

 private:
  friend class Graph;
  Shape shape_;
  std::shared_ptr<const std::vector<float>> data_;
  bool requires_grad_ = false;
  int node_ = -1;
  std::uint64_t graph_id_ = 0;  // which Graph recorded node_; 0 = unbound
};

}  // namespace mmv
