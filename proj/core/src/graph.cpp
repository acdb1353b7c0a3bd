#include "mmv/graph.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#include "blas.hpp"

namespace mmv {

using detail::sgemm;

namespace {

std::atomic<std::uint64_t> g_graph_serial{1};

enum class Broadcast { same, row_vector, scalar };

// rhs may equal lhs's shape, be a rank-1 vector matching the last dim, or a scalar.
Broadcast broadcast_kind(const Shape& lhs, const Shape& rhs, const char* op) {
  if (lhs == rhs) return Broadcast::same;
  if (numel(rhs) == 1) return Broadcast::scalar;
  if (rhs.size() == 1 && !lhs.empty() && rhs[0] == lhs.back()) return Broadcast::row_vector;
  fail(std::string(op) + ": shapes " + shape_str(lhs) + " and " + shape_str(rhs) +
       " are not broadcastable (rhs must match, be a last-dim vector, or a scalar)");
}

float gelu_tanh(float x) {
  // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  const float kAlpha = 0.7978845608028654f;
  const float kBeta = 0.044715f;
  float inner = kAlpha * (x + kBeta * x * x * x);
  return 0.5f * x * (1.0f + std::tanh(inner));
}

float gelu_tanh_grad(float x) {
  const float kAlpha = 0.7978845608028654f;
  const float kBeta = 0.044715f;
  float inner = kAlpha * (x + kBeta * x * x * x);
  float t = std::tanh(inner);
  float sech2 = 1.0f - t * t;
  return 0.5f * (1.0f + t) + 0.5f * x * sech2 * kAlpha * (1.0f + 3.0f * kBeta * x * x);
}

}  // namespace

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::gelu: return "gelu";
    case OpKind::softmax_lastdim: return "softmax_lastdim";
    case OpKind::reshape: return "reshape";
    case OpKind::transpose: return "transpose";
    case OpKind::slice: return "slice";
    case OpKind::concat: return "concat";
    case OpKind::mean_reduce: return "mean_reduce";
    case OpKind::sum_reduce: return "sum_reduce";
    case OpKind::square: return "square";
    case OpKind::sqrt: return "sqrt";
    case OpKind::exp: return "exp";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// BackwardCtx

std::span<const float> Graph::BackwardCtx::out_grad() const {
  return g_->grads_[static_cast<std::size_t>(node_id_)];
}

std::span<const float> Graph::BackwardCtx::out_value() const { return g_->node_values(node_id_); }

const Shape& Graph::BackwardCtx::out_shape() const {
  return g_->nodes_[static_cast<std::size_t>(node_id_)].shape;
}

int Graph::BackwardCtx::num_inputs() const {
  return static_cast<int>(g_->nodes_[static_cast<std::size_t>(node_id_)].inputs.size());
}

std::span<const float> Graph::BackwardCtx::in_value(int i) const {
  return g_->node_values(g_->nodes_[static_cast<std::size_t>(node_id_)].inputs[static_cast<std::size_t>(i)]);
}

const Shape& Graph::BackwardCtx::in_shape(int i) const {
  int id = g_->nodes_[static_cast<std::size_t>(node_id_)].inputs[static_cast<std::size_t>(i)];
  return g_->nodes_[static_cast<std::size_t>(id)].shape;
}

bool Graph::BackwardCtx::needs_grad(int i) const {
  int id = g_->nodes_[static_cast<std::size_t>(node_id_)].inputs[static_cast<std::size_t>(i)];
  return g_->nodes_[static_cast<std::size_t>(id)].requires_grad;
}

std::span<float> Graph::BackwardCtx::in_grad(int i) {
  int id = g_->nodes_[static_cast<std::size_t>(node_id_)].inputs[static_cast<std::size_t>(i)];
  auto& buf = g_->grads_[static_cast<std::size_t>(id)];
  if (buf.empty()) {
    buf.assign(g_->nodes_[static_cast<std::size_t>(id)].value->size(), 0.0f);
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Graph

Graph::Graph() : id_(g_graph_serial.fetch_add(1)) {}

void Graph::check_same_graph(const Tensor& t) const {
  if (t.node_ < 0) return;
  if (t.graph_id_ != id_) fail("tensor is bound to a different graph");
}

int Graph::bind(const Tensor& t) {
  if (!t.defined()) fail("undefined tensor passed to graph op");
  if (t.node_ >= 0) {
    check_same_graph(t);
    return t.node_;
  }
  if (t.requires_grad()) {
    fail("requires_grad tensor must be registered with Graph::leaf before use");
  }
  Node n;
  n.shape = t.shape_;
  n.value = t.data_;
  n.requires_grad = false;
  n.name = "constant";
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Graph::leaf(Shape shape, std::span<const float> data, bool requires_grad) {
  return leaf(Tensor::from(std::move(shape), data, requires_grad));
}

Tensor Graph::leaf(const Tensor& t) {
  if (!t.defined()) fail("undefined tensor passed to Graph::leaf");
  Node n;
  n.shape = t.shape_;
  n.value = t.data_;
  n.requires_grad = t.requires_grad();
  n.name = "leaf";
  nodes_.push_back(std::move(n));
  Tensor bound = t;
  bound.node_ = static_cast<int>(nodes_.size()) - 1;
  bound.graph_id_ = id_;
  return bound;
}

Tensor Graph::constant(Shape shape, std::span<const float> data) {
  return leaf(Tensor::from(std::move(shape), data, false));
}

Tensor Graph::constant_scalar(float value) { return leaf(Tensor::scalar(value, false)); }

Tensor Graph::record(std::string name, Shape shape, std::vector<float> data,
                     std::vector<int> inputs, BackwardFn backward) {
  bool needs = false;
  for (int id : inputs) needs |= nodes_[static_cast<std::size_t>(id)].requires_grad;
  Tensor out(std::move(shape), std::move(data), needs);
  Node n;
  n.shape = out.shape_;
  n.value = out.data_;
  n.inputs = std::move(inputs);
  n.backward = needs ? std::move(backward) : BackwardFn{};
  n.requires_grad = needs;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  out.node_ = static_cast<int>(nodes_.size()) - 1;
  out.graph_id_ = id_;
  return out;
}

Tensor Graph::custom_op(std::string name, Shape out_shape, std::vector<float> out_data,
                        std::span<const Tensor> inputs, BackwardFn backward) {
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const Tensor& t : inputs) ids.push_back(bind(t));
  return record(std::move(name), std::move(out_shape), std::move(out_data), std::move(ids),
                std::move(backward));
}

// ---------------------------------------------------------------------------
// Ops

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  sgemm(false, false, m, n, k, a.values().data(), k, b.values().data(), n, 0.0f, out.data(), n);
  return record("matmul", {m, n}, std::move(out), {bind(a), bind(b)}, [m, n, k](BackwardCtx& ctx) {
    const float* go = ctx.out_grad().data();
    if (ctx.needs_grad(0)) {
      sgemm(false, true, m, k, n, go, n, ctx.in_value(1).data(), n, 1.0f, ctx.in_grad(0).data(), k);
    }
    if (ctx.needs_grad(1)) {
      sgemm(true, false, k, n, m, ctx.in_value(0).data(), k, go, n, 1.0f, ctx.in_grad(1).data(), n);
    }
  });
}

namespace {

// Shared elementwise-with-broadcast forward/backward for add/sub/mul.
template <typename Fwd>
std::vector<float> broadcast_eval(std::span<const float> a, std::span<const float> b,
                                  Broadcast kind, std::size_t last, Fwd f) {
  std::vector<float> out(a.size());
  switch (kind) {
    case Broadcast::same:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
      break;
    case Broadcast::scalar:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[0]);
      break;
    case Broadcast::row_vector:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i % last]);
      break;
  }
  return out;
}

}  // namespace

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  Broadcast kind = broadcast_kind(a.shape(), b.shape(), "add");
  std::size_t last = a.shape().empty() ? 1 : static_cast<std::size_t>(a.shape().back());
  std::vector<float> out =
      broadcast_eval(a.values(), b.values(), kind, last, [](float x, float y) { return x + y; });
  return record("add", a.shape(), std::move(out), {bind(a), bind(b)}, [kind, last](BackwardCtx& ctx) {
    auto go = ctx.out_grad();
    if (ctx.needs_grad(0)) {
      auto ga = ctx.in_grad(0);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.in_grad(1);
      switch (kind) {
        case Broadcast::same:
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
          break;
        case Broadcast::scalar: {
          double s = 0.0;
          for (float g : go) s += g;
          gb[0] += static_cast<float>(s);
          break;
        }
        case Broadcast::row_vector:
          for (std::size_t i = 0; i < go.size(); ++i) gb[i % last] += go[i];
          break;
      }
    }
  });
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  Broadcast kind = broadcast_kind(a.shape(), b.shape(), "sub");
  std::size_t last = a.shape().empty() ? 1 : static_cast<std::size_t>(a.shape().back());
  std::vector<float> out =
      broadcast_eval(a.values(), b.values(), kind, last, [](float x, float y) { return x - y; });
  return record("sub", a.shape(), std::move(out), {bind(a), bind(b)}, [kind, last](BackwardCtx& ctx) {
    auto go = ctx.out_grad();
    if (ctx.needs_grad(0)) {
      auto ga = ctx.in_grad(0);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.in_grad(1);
      switch (kind) {
        case Broadcast::same:
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
          break;
        case Broadcast::scalar: {
          double s = 0.0;
          for (float g : go) s += g;
          gb[0] -= static_cast<float>(s);
          break;
        }
        case Broadcast::row_vector:
          for (std::size_t i = 0; i < go.size(); ++i) gb[i % last] -= go[i];
          break;
      }
    }
  });
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  Broadcast kind = broadcast_kind(a.shape(), b.shape(), "mul");
  std::size_t last = a.shape().empty() ? 1 : static_cast<std::size_t>(a.shape().back());
  std::vector<float> out =
      broadcast_eval(a.values(), b.values(), kind, last, [](float x, float y) { return x * y; });
  return record("mul", a.shape(), std::move(out), {bind(a), bind(b)}, [kind, last](BackwardCtx& ctx) {
    auto go = ctx.out_grad();
    auto av = ctx.in_value(0);
    auto bv = ctx.in_value(1);
    if (ctx.needs_grad(0)) {
      auto ga = ctx.in_grad(0);
      switch (kind) {
        case Broadcast::same:
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
          break;
        case Broadcast::scalar:
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[0];
          break;
        case Broadcast::row_vector:
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i % last];
          break;
      }
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.in_grad(1);
      switch (kind) {
        case Broadcast::same:
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
          break;
        case Broadcast::scalar: {
          double s = 0.0;
          for (std::size_t i = 0; i < go.size(); ++i) s += static_cast<double>(go[i]) * av[i];
          gb[0] += static_cast<float>(s);
          break;
        }
        case Broadcast::row_vector:
          for (std::size_t i = 0; i < go.size(); ++i) gb[i % last] += go[i] * av[i];
          break;
      }
    }
  });
}

Tensor Graph::scale(const Tensor& a, float c) {
  std::vector<float> out(a.values().begin(), a.values().end());
  for (float& v : out) v *= c;
  return record("scale", a.shape(), std::move(out), {bind(a)}, [c](BackwardCtx& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto go = ctx.out_grad();
    auto ga = ctx.in_grad(0);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
  });
}

Tensor Graph::layer_norm(const Tensor& a, float eps) {
  if (a.rank() < 1) fail("layer_norm: rank-0 input");
  const std::size_t last = static_cast<std::size_t>(a.shape().back());
  const std::size_t rows = static_cast<std::size_t>(a.size()) / last;
  auto av = a.values();
  std::vector<float> out(av.size());
  auto inv_std = std::make_shared<std::vector<float>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = av.data() + r * last;
    double mean = 0.0;
    for (std::size_t i = 0; i < last; ++i) mean += x[i];
    mean /= static_cast<double>(last);
    double var = 0.0;
    for (std::size_t i = 0; i < last; ++i) {
      double d = x[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(last);  // population variance
    double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = static_cast<float>(inv);
    float* y = out.data() + r * last;
    for (std::size_t i = 0; i < last; ++i) {
      y[i] = static_cast<float>((x[i] - mean) * inv);
    }
  }
  return record("layer_norm", a.shape(), std::move(out), {bind(a)},
                [rows, last, inv_std](BackwardCtx& ctx) {
                  if (!ctx.needs_grad(0)) return;
                  auto go = ctx.out_grad();
                  auto y = ctx.out_value();
                  auto gx = ctx.in_grad(0);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const float* gy = go.data() + r * last;
                    const float* yr = y.data() + r * last;
                    double mean_gy = 0.0, mean_gy_y = 0.0;
                    for (std::size_t i = 0; i < last; ++i) {
                      mean_gy += gy[i];
                      mean_gy_y += static_cast<double>(gy[i]) * yr[i];
                    }
                    mean_gy /= static_cast<double>(last);
                    mean_gy_y /= static_cast<double>(last);
                    const double inv = (*inv_std)[r];
                    float* g = gx.data() + r * last;
                    for (std::size_t i = 0; i < last; ++i) {
                      g[i] += static_cast<float>(inv * (gy[i] - mean_gy - yr[i] * mean_gy_y));
                    }
                  }
                });
}

Tensor Graph::gelu(const Tensor& a) {
  auto av = a.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = gelu_tanh(av[i]);
  return record("gelu", a.shape(), std::move(out), {bind(a)}, [](BackwardCtx& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto go = ctx.out_grad();
    auto x = ctx.in_value(0);
    auto gx = ctx.in_grad(0);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * gelu_tanh_grad(x[i]);
  });
}

Tensor Graph::softmax_lastdim(const Tensor& a) {
  if (a.rank() < 1) fail("softmax_lastdim: rank-0 input");
  const std::size_t last = static_cast<std::size_t>(a.shape().back());
  const std::size_t rows = static_cast<std::size_t>(a.size()) / last;
  auto av = a.values();
  std::vector<float> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = av.data() + r * last;
    float* y = out.data() + r * last;
    float mx = x[0];
    for (std::size_t i = 1; i < last; ++i) mx = std::max(mx, x[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < last; ++i) {
      y[i] = std::exp(x[i] - mx);
      denom += y[i];
    }
    const float inv = static_cast<float>(1.0 / denom);
    for (std::size_t i = 0; i < last; ++i) y[i] *= inv;
  }
  return record("softmax_lastdim", a.shape(), std::move(out), {bind(a)},
                [rows, last](BackwardCtx& ctx) {
                  if (!ctx.needs_grad(0)) return;
                  auto go = ctx.out_grad();
                  auto y = ctx.out_value();
                  auto gx = ctx.in_grad(0);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const float* gy = go.data() + r * last;
                    const float* yr = y.data() + r * last;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < last; ++i) dot += static_cast<double>(gy[i]) * yr[i];
                    float* g = gx.data() + r * last;
                    for (std::size_t i = 0; i < last; ++i) {
                      g[i] += static_cast<float>(yr[i] * (gy[i] - dot));
                    }
                  }
                });
}

Tensor Graph::reshape(const Tensor& a, Shape to) {
  if (numel(to) != a.size()) {
    fail("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(to));
  }
  // Shares the input buffer; only the shape changes.
  int in_id = bind(a);
  Tensor out;
  out.shape_ = std::move(to);
  out.data_ = a.data_;
  Node n;
  n.shape = out.shape_;
  n.value = out.data_;
  n.inputs = {in_id};
  n.requires_grad = nodes_[static_cast<std::size_t>(in_id)].requires_grad;
  n.name = "reshape";
  if (n.requires_grad) {
    n.backward = [](BackwardCtx& ctx) {
      if (!ctx.needs_grad(0)) return;
      auto go = ctx.out_grad();
      auto gi = ctx.in_grad(0);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
    };
  }
  out.requires_grad_ = n.requires_grad;
  nodes_.push_back(std::move(n));
  out.node_ = static_cast<int>(nodes_.size()) - 1;
  out.graph_id_ = id_;
  return out;
}

Tensor Graph::transpose(const Tensor& a) {
  if (a.rank() != 2) fail("transpose: expected rank-2, got " + shape_str(a.shape()));
  const int r = a.dim(0), c = a.dim(1);
  auto av = a.values();
  std::vector<float> out(av.size());
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = av[static_cast<std::size_t>(i) * c + j];
  }
  return record("transpose", {c, r}, std::move(out), {bind(a)}, [r, c](BackwardCtx& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto go = ctx.out_grad();
    auto gi = ctx.in_grad(0);
    for (int j = 0; j < c; ++j) {
      for (int i = 0; i < r; ++i) {
        gi[static_cast<std::size_t>(i) * c + j] += go[static_cast<std::size_t>(j) * r + i];
      }
    }
  });
}

Tensor Graph::slice_rows(const Tensor& a, int begin, int end) {
  if (a.rank() < 1) fail("slice: rank-0 input");
  const int rows = a.dim(0);
  if (begin < 0 || end > rows || begin >= end) {
    fail("slice: rows [" + std::to_string(begin) + "," + std::to_string(end) +
         ") out of range for shape " + shape_str(a.shape()));
  }
  const std::size_t row_sz = static_cast<std::size_t>(a.size()) / static_cast<std::size_t>(rows);
  Shape out_shape = a.shape();
  out_shape[0] = end - begin;
  auto av = a.values();
  std::vector<float> out(av.begin() + static_cast<std::ptrdiff_t>(begin * row_sz),
                         av.begin() + static_cast<std::ptrdiff_t>(end * row_sz));
  return record("slice", std::move(out_shape), std::move(out), {bind(a)},
                [begin, row_sz](BackwardCtx& ctx) {
                  if (!ctx.needs_grad(0)) return;
                  auto go = ctx.out_grad();
                  auto gi = ctx.in_grad(0);
                  float* dst = gi.data() + static_cast<std::size_t>(begin) * row_sz;
                  for (std::size_t i = 0; i < go.size(); ++i) dst[i] += go[i];
                });
}

Tensor Graph::concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail("concat: no inputs");
  Shape trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  int rows = 0;
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    if (t.rank() < 1) fail("concat: rank-0 input");
    Shape tr(t.shape().begin() + 1, t.shape().end());
    if (tr != trailing) {
      fail("concat: trailing dims mismatch, " + shape_str(parts[0].shape()) + " vs " +
           shape_str(t.shape()));
    }
    rows += t.dim(0);
    total += static_cast<std::size_t>(t.size());
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = rows;
  std::vector<float> out;
  out.reserve(total);
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  ids.reserve(parts.size());
  for (const Tensor& t : parts) {
    auto tv = t.values();
    out.insert(out.end(), tv.begin(), tv.end());
    ids.push_back(bind(t));
    sizes.push_back(tv.size());
  }
  return record("concat", std::move(out_shape), std::move(out), std::move(ids),
                [sizes](BackwardCtx& ctx) {
                  auto go = ctx.out_grad();
                  std::size_t off = 0;
                  for (int i = 0; i < ctx.num_inputs(); ++i) {
                    if (ctx.needs_grad(i)) {
                      auto gi = ctx.in_grad(i);
                      for (std::size_t j = 0; j < sizes[static_cast<std::size_t>(i)]; ++j) {
                        gi[j] += go[off + j];
                      }
                    }
                    off += sizes[static_cast<std::size_t>(i)];
                  }
                });
}

Tensor Graph::mean_all(const Tensor& a) {
  double s = 0.0;
  for (float v : a.values()) s += v;
  const float inv_n = 1.0f / static_cast<float>(a.size());
  std::vector<float> out{static_cast<float>(s / static_cast<double>(a.size()))};
  return record("mean_reduce", {1}, std::move(out), {bind(a)}, [inv_n](BackwardCtx& ctx) {
    if (!ctx.needs_grad(0)) return;
    const float g = ctx.out_grad()[0] * inv_n;
    auto gi = ctx.in_grad(0);
    for (float& v : gi) v += g;
  });
}

Tensor Graph::sum_all(const Tensor& a) {
  double s = 0.0;
  for (float v : a.values()) s += v;
  std::vector<float> out{static_cast<float>(s)};
  return record("sum_reduce", {1}, std::move(out), {bind(a)}, [](BackwardCtx& ctx) {
    if (!ctx.needs_grad(0)) return;
    const float g = ctx.out_grad()[0];
    auto gi = ctx.in_grad(0);
    for (float& v : gi) v += g;
  });
}

Tensor Graph::mean_rows(const Tensor& a) {
  if (a.rank() < 2) fail("mean_rows: expected rank >= 2, got " + shape_str(a.shape()));
  const std::size_t rows = static_cast<std::size_t>(a.dim(0));
  const std::size_t cols = static_cast<std::size_t>(a.size()) / rows;
  auto av = a.values();
  std::vector<double> acc(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) acc[c] += av[r * cols + c];
  }
  std::vector<float> out(cols);
  for (std::size_t c = 0; c < cols; ++c) out[c] = static_cast<float>(acc[c] / static_cast<double>(rows));
  Shape out_shape(a.shape().begin() + 1, a.shape().end());
  const float inv_r = 1.0f / static_cast<float>(rows);
  return record("mean_rows", std::move(out_shape), std::move(out), {bind(a)},
                [rows, cols, inv_r](BackwardCtx& ctx) {
                  if (!ctx.needs_grad(0)) return;
                  auto go = ctx.out_grad();
                  auto gi = ctx.in_grad(0);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) gi[r * cols + c] += go[c] * inv_r;
                  }
                });
}

Tensor Graph::square(const Tensor& a) {
  auto av = a.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * av[i];
  return record("square", a.shape(), std::move(out), {bind(a)}, [](BackwardCtx& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto go = ctx.out_grad();
    auto x = ctx.in_value(0);
    auto gi = ctx.in_grad(0);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += 2.0f * x[i] * go[i];
  });
}

Tensor Graph::sqrt(const Tensor& a) {
  auto av = a.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] < 0.0f) fail("sqrt: negative input at flat index " + std::to_string(i));
    out[i] = std::sqrt(av[i]);
  }
  return record("sqrt", a.shape(), std::move(out), {bind(a)}, [](BackwardCtx& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto go = ctx.out_grad();
    auto y = ctx.out_value();
    auto gi = ctx.in_grad(0);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] / (2.0f * y[i]);
  });
}

Tensor Graph::exp(const Tensor& a) {
  auto av = a.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
  return record("exp", a.shape(), std::move(out), {bind(a)}, [](BackwardCtx& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto go = ctx.out_grad();
    auto y = ctx.out_value();
    auto gi = ctx.in_grad(0);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * y[i];
  });
}

Tensor Graph::forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  auto unary = [&](const char* what) -> const Tensor& {
    if (inputs.size() != 1) fail(std::string(what) + ": expected 1 input");
    return inputs[0];
  };
  auto binary = [&](const char* what) {
    if (inputs.size() != 2) fail(std::string(what) + ": expected 2 inputs");
  };
  switch (kind) {
    case OpKind::matmul: binary("matmul"); return matmul(inputs[0], inputs[1]);
    case OpKind::add: binary("add"); return add(inputs[0], inputs[1]);
    case OpKind::mul: binary("mul"); return mul(inputs[0], inputs[1]);
    case OpKind::layer_norm: return layer_norm(unary("layer_norm"), attrs.ln_eps);
    case OpKind::gelu: return gelu(unary("gelu"));
    case OpKind::softmax_lastdim: return softmax_lastdim(unary("softmax_lastdim"));
    case OpKind::reshape: return reshape(unary("reshape"), attrs.reshape_to);
    case OpKind::transpose: return transpose(unary("transpose"));
    case OpKind::slice: return slice_rows(unary("slice"), attrs.slice_begin, attrs.slice_end);
    case OpKind::concat: return concat_rows(inputs);
    case OpKind::mean_reduce: return mean_all(unary("mean_reduce"));
    case OpKind::sum_reduce: return sum_all(unary("sum_reduce"));
    case OpKind::square: return square(unary("square"));
    case OpKind::sqrt: return sqrt(unary("sqrt"));
    case OpKind::exp: return exp(unary("exp"));
  }
  fail("forward_op: unknown kind");
}

// ---------------------------------------------------------------------------
// Backward

void Graph::backward(const Tensor& loss) {
  if (loss.node_ < 0 || static_cast<std::size_t>(loss.node_) >= nodes_.size()) {
    fail("backward: loss tensor is not recorded on this graph");
  }
  if (loss.size() != 1) {
    fail("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(loss.node_)] = {1.0f};
  for (int id = loss.node_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (grads_[static_cast<std::size_t>(id)].empty()) continue;
    if (!n.backward) continue;
    BackwardCtx ctx(this, id);
    n.backward(ctx);
  }
  // Leaves untouched by the loss still report a (zero) gradient.
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.inputs.empty() && grads_[id].empty()) {
      grads_[id].assign(n.value->size(), 0.0f);
    }
  }
}

bool Graph::has_grad(const Tensor& t) const {
  return t.node_ >= 0 && static_cast<std::size_t>(t.node_) < grads_.size() &&
         !grads_[static_cast<std::size_t>(t.node_)].empty();
}

std::span<const float> Graph::grad(const Tensor& t) const {
  if (!has_grad(t)) {
    fail("grad: no gradient recorded for this tensor (did backward run, and does it require grad?)");
  }
  return grads_[static_cast<std::size_t>(t.node_)];
}

}  // namespace mmv
