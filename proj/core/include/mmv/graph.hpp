// Reverse-mode differentiation tape over float32 tensors.
//
// A Graph records one forward computation as a topologically ordered list of
// nodes; backward() walks that list in reverse exactly once and accumulates
// gradients into every requires_grad leaf. Tensors recorded on a graph are
// never mutated. Reductions and normalization statistics accumulate in double
// before rounding back to float32.
//
// The op set is the minimum the encoder and objective need. Module-level ops
// (rotary embedding, packed attention, segment pooling, the Epps-Pulley
// statistic) register themselves through custom_op() with their own backward
// rules.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmv/tensor.hpp"

namespace mmv {

enum class OpKind {
  matmul,
  add,
  mul,
  layer_norm,
  gelu,
  softmax_lastdim,
  reshape,
  transpose,
  slice,
  concat,
  mean_reduce,
  sum_reduce,
  square,
  sqrt,
  exp,
};

const char* op_kind_name(OpKind kind);

// Parameters for forward_op() kinds that need them.
struct OpAttrs {
  float ln_eps = 1e-5f;   // layer_norm
  Shape reshape_to;       // reshape
  int slice_begin = 0;    // slice (rows along axis 0)
  int slice_end = 0;
};

class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Context handed to backward rules. in_grad() allocates a zeroed buffer on
  // first access; rules must accumulate (+=) into it.
  class BackwardCtx {
   public:
    std::span<const float> out_grad() const;
    std::span<const float> out_value() const;
    const Shape& out_shape() const;
    int num_inputs() const;
    std::span<const float> in_value(int i) const;
    const Shape& in_shape(int i) const;
    bool needs_grad(int i) const;
    std::span<float> in_grad(int i);

   private:
    friend class Graph;
    BackwardCtx(Graph* g, int node_id) : g_(g), node_id_(node_id) {}
    Graph* g_;
    int node_id_;
  };
  using BackwardFn = std::function<void(BackwardCtx&)>;

  // Leaves. Parameters and inputs enter the graph here; the returned tensor
  // (not the argument) carries the node id used to look up gradients later.
  Tensor leaf(Shape shape, std::span<const float> data, bool requires_grad);
  Tensor leaf(const Tensor& t);
  Tensor constant(Shape shape, std::span<const float> data);
  Tensor constant_scalar(float value);

  // Core ops. add/sub/mul accept equal shapes, a rank-1 rhs matching the last
  // dimension (row broadcast), or a scalar rhs.
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, float c);
  Tensor layer_norm(const Tensor& a, float eps = 1e-5f);
  Tensor gelu(const Tensor& a);
  Tensor softmax_lastdim(const Tensor& a);
  Tensor reshape(const Tensor& a, Shape to);
  Tensor transpose(const Tensor& a);  // rank-2
  Tensor slice_rows(const Tensor& a, int begin, int end);
  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor mean_all(const Tensor& a);
  Tensor sum_all(const Tensor& a);
  Tensor mean_rows(const Tensor& a);  // reduce axis 0
  Tensor square(const Tensor& a);
  Tensor sqrt(const Tensor& a);
  Tensor exp(const Tensor& a);

  // Dispatch by kind; used by the per-kind gradient property tests.
  Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

  // Module-level ops: the caller computed out_data and provides the backward rule.
  Tensor custom_op(std::string name, Shape out_shape, std::vector<float> out_data,
                   std::span<const Tensor> inputs, BackwardFn backward);

  // Reverse pass from a scalar loss. Afterwards every requires_grad leaf has
  // an accumulated (possibly zero) gradient.
  void backward(const Tensor& loss);

  bool has_grad(const Tensor& t) const;
  std::span<const float> grad(const Tensor& t) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::shared_ptr<const std::vector<float>> value;
    std::vector<int> inputs;
    BackwardFn backward;  // empty for leaves
    bool requires_grad = false;
    std::string name;
  };

  int bind(const Tensor& t);  // node id of t on this graph; binds constants on the fly
  Tensor record(std::string name, Shape shape, std::vector<float> data,
                std::vector<int> inputs, BackwardFn backward);
  std::span<const float> node_values(int id) const { return *nodes_[static_cast<std::size_t>(id)].value; }
  void check_same_graph(const Tensor& t) const;

  std::uint64_t id_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::vector<float>> grads_;
};

}  // namespace mmv
