#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmv/grad_check.hpp"
#include "mmv/graph.hpp"
#include "mmv/rng.hpp"
#include "support/test_util.hpp"

using namespace mmv;
using mmv::testing::contains;
using mmv::testing::random_tensor;

TEST_SUITE_BEGIN("substrate");

TEST_CASE("matmul matches the standard product") {
  Graph g;
  // 2x3 and 3x2 identity-padded matrices
  Tensor a = g.constant({2, 3}, std::vector<float>{1, 0, 0, 0, 1, 0});
  Tensor b = g.constant({3, 2}, std::vector<float>{1, 0, 0, 1, 0, 0});
  Tensor c = g.matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.values()[0] == 1.0f);
  CHECK(c.values()[1] == 0.0f);
  CHECK(c.values()[2] == 0.0f);
  CHECK(c.values()[3] == 1.0f);
}

TEST_CASE("matmul rejects mismatched shapes, naming them") {
  Graph g;
  Tensor a = g.constant({2, 3}, std::vector<float>(6, 1.0f));
  Tensor b = g.constant({2, 2}, std::vector<float>(4, 1.0f));
  try {
    g.matmul(a, b);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(contains(e.what(), "[2,3]"));
    CHECK(contains(e.what(), "[2,2]"));
  }
}

TEST_CASE("softmax of a constant row is uniform") {
  Graph g;
  Tensor x = g.constant({3}, std::vector<float>{0, 0, 0});
  Tensor y = g.softmax_lastdim(x);
  for (float v : y.values()) CHECK(v == doctest::Approx(1.0f / 3.0f).epsilon(1e-6));
}

TEST_CASE("layer_norm hand-evaluated on [1,2,3]") {
  Graph g;
  Tensor x = g.constant({3}, std::vector<float>{1, 2, 3});
  Tensor y = g.layer_norm(x, 1e-5f);
  CHECK(y.values()[0] == doctest::Approx(-1.22474).epsilon(0).scale(0).epsilon(1e-4));
  CHECK(std::fabs(y.values()[0] + 1.22474f) < 1e-4);
  CHECK(std::fabs(y.values()[1]) < 1e-5);
  CHECK(std::fabs(y.values()[2] - 1.22474f) < 1e-4);
}

TEST_CASE("backward of sum(x^2)") {
  Graph g;
  Tensor x = g.leaf({2}, std::vector<float>{1, 2}, true);
  Tensor loss = g.sum_all(g.square(x));
  g.backward(loss);
  auto gx = g.grad(x);
  CHECK(gx[0] == doctest::Approx(2.0f));
  CHECK(gx[1] == doctest::Approx(4.0f));
}

TEST_CASE("backward of a loss independent of x gives zero grad") {
  Graph g;
  Tensor x = g.leaf({3}, std::vector<float>{1, 2, 3}, true);
  Tensor c = g.constant_scalar(5.0f);
  Tensor loss = g.sum_all(c);
  g.backward(loss);
  auto gx = g.grad(x);
  for (float v : gx) CHECK(v == 0.0f);
}

TEST_CASE("backward rejects non-scalar loss") {
  Graph g;
  Tensor x = g.leaf({2}, std::vector<float>{1, 2}, true);
  Tensor y = g.square(x);
  CHECK_THROWS_AS(g.backward(y), Error);
}

TEST_CASE("unbound requires_grad tensors must go through leaf()") {
  Graph g;
  Tensor w = Tensor::from({2}, std::vector<float>{1, 2}, true);
  CHECK_THROWS_AS(g.square(w), Error);
}

TEST_CASE("grad_check: identity sum is exact") {
  // Dyadic probe values and a power-of-two step keep every float32 evaluation
  // exact, so the finite difference reproduces the gradient bit for bit.
  Tensor p = Tensor::from({4}, std::vector<float>{0.25f, -0.5f, 0.75f, 1.0f});
  auto report = grad_check(
      [](Graph& g, std::span<const Tensor> xs) { return g.sum_all(xs[0]); }, p, 0x1.0p-10f, 1e-6f);
  CHECK(report.pass);
  CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("grad_check: gelu then sum at 0.5") {
  Tensor p = Tensor::from({1}, std::vector<float>{0.5f});
  auto report = grad_check(
      [](Graph& g, std::span<const Tensor> xs) { return g.sum_all(g.gelu(xs[0])); }, p, 1e-3f,
      1e-2f);
  CHECK(report.pass);
}

TEST_CASE("grad_check reports non-finite values with a location") {
  Tensor p = Tensor::from({2}, std::vector<float>{1.0f, 2.0f});
  auto report = grad_check(
      [](Graph& g, std::span<const Tensor> xs) {
        Tensor inf = g.constant_scalar(std::numeric_limits<float>::infinity());
        return g.sum_all(g.mul(g.sum_all(xs[0]), inf));
      },
      p, 1e-3f, 1e-2f);
  CHECK(!report.pass);
  CHECK(contains(report.message, "non-finite"));
}

namespace {

// Random probe inputs for one op kind. Inputs that must stay positive (sqrt)
// or well-conditioned (layer_norm rows) get their own ranges.
struct OpCase {
  std::vector<Tensor> inputs;
  OpAttrs attrs;
};

OpCase make_case(OpKind kind, Rng& rng) {
  OpCase c;
  auto dim = [&](int lo, int hi) { return lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1))); };
  switch (kind) {
    case OpKind::matmul: {
      int m = dim(1, 4), k = dim(1, 4), n = dim(1, 4);
      c.inputs = {random_tensor({m, k}, rng, -1, 1, true), random_tensor({k, n}, rng, -1, 1, true)};
      break;
    }
    case OpKind::add:
    case OpKind::mul: {
      int r = dim(1, 4), cdim = dim(1, 4);
      int mode = static_cast<int>(rng.uniform_int(3));
      Tensor a = random_tensor({r, cdim}, rng, -1, 1, true);
      Tensor b = mode == 0   ? random_tensor({r, cdim}, rng, -1, 1, true)
                 : mode == 1 ? random_tensor({cdim}, rng, -1, 1, true)
                             : random_tensor({1}, rng, -1, 1, true);
      c.inputs = {a, b};
      break;
    }
    case OpKind::layer_norm: {
      // Rows get a minimum spread: finite differences cannot resolve the
      // near-degenerate regime where the row variance is comparable to h^2.
      int r = dim(1, 3), cdim = dim(2, 6);
      Tensor t = random_tensor({r, cdim}, rng, -2, 2, true);
      std::vector<float> vals(t.values().begin(), t.values().end());
      for (int row = 0; row < r; ++row) {
        float* x = vals.data() + static_cast<std::size_t>(row) * cdim;
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < cdim; ++i) mean += x[i];
        mean /= cdim;
        for (int i = 0; i < cdim; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= cdim;
        const double min_std = 0.5;
        if (var < min_std * min_std) {
          const double gain = var > 1e-12 ? min_std / std::sqrt(var) : 1.0;
          for (int i = 0; i < cdim; ++i) {
            x[i] = static_cast<float>(mean + (x[i] - mean) * gain +
                                      (var > 1e-12 ? 0.0 : (i % 2 ? min_std : -min_std)));
          }
        }
      }
      c.inputs = {Tensor({r, cdim}, std::move(vals), true)};
      c.attrs.ln_eps = 1e-5f;
      break;
    }
    case OpKind::gelu:
    case OpKind::softmax_lastdim:
    case OpKind::square: {
      int r = dim(1, 3), cdim = dim(1, 5);
      c.inputs = {random_tensor({r, cdim}, rng, -2, 2, true)};
      break;
    }
    case OpKind::exp: {
      int r = dim(1, 3), cdim = dim(1, 5);
      c.inputs = {random_tensor({r, cdim}, rng, -1.5f, 1.5f, true)};
      break;
    }
    case OpKind::sqrt: {
      int n = dim(1, 6);
      c.inputs = {random_tensor({n}, rng, 0.2f, 3.0f, true)};
      break;
    }
    case OpKind::reshape: {
      int r = dim(1, 3), cdim = dim(1, 4);
      c.inputs = {random_tensor({r, cdim}, rng, -1, 1, true)};
      c.attrs.reshape_to = {r * cdim};
      break;
    }
    case OpKind::transpose: {
      int r = dim(1, 4), cdim = dim(1, 4);
      c.inputs = {random_tensor({r, cdim}, rng, -1, 1, true)};
      break;
    }
    case OpKind::slice: {
      int r = dim(2, 6), cdim = dim(1, 3);
      c.inputs = {random_tensor({r, cdim}, rng, -1, 1, true)};
      c.attrs.slice_begin = dim(0, r - 1);
      c.attrs.slice_end = c.attrs.slice_begin + dim(1, r - c.attrs.slice_begin);
      break;
    }
    case OpKind::concat: {
      int cdim = dim(1, 3);
      c.inputs = {random_tensor({dim(1, 3), cdim}, rng, -1, 1, true),
                  random_tensor({dim(1, 3), cdim}, rng, -1, 1, true)};
      break;
    }
    case OpKind::mean_reduce:
    case OpKind::sum_reduce: {
      int r = dim(1, 4), cdim = dim(1, 4);
      c.inputs = {random_tensor({r, cdim}, rng, -1, 1, true)};
      break;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("every op kind: analytic gradient matches finite differences over 100 seeds") {
  const OpKind kinds[] = {OpKind::matmul,   OpKind::add,         OpKind::mul,
                          OpKind::layer_norm, OpKind::gelu,      OpKind::softmax_lastdim,
                          OpKind::reshape,  OpKind::transpose,   OpKind::slice,
                          OpKind::concat,   OpKind::mean_reduce, OpKind::sum_reduce,
                          OpKind::square,   OpKind::sqrt,        OpKind::exp};
  for (OpKind kind : kinds) {
    const std::string kind_name = op_kind_name(kind);
    CAPTURE(kind_name);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      CAPTURE(seed);
      Rng rng = Rng::derive(20260801, "op-grad", static_cast<std::uint64_t>(kind), seed);
      OpCase c = make_case(kind, rng);
      // Random constant weighting makes the scalarized loss sensitive to every
      // output coordinate (a plain mean is constant for softmax rows). Mean
      // rather than sum keeps the loss scale, and with it the float32
      // finite-difference noise, bounded.
      std::vector<float> w;
      auto report = grad_check(
          [&](Graph& g, std::span<const Tensor> xs) {
            Tensor out = g.forward_op(kind, xs, c.attrs);
            if (w.empty()) {
              Rng wr = Rng::derive(99, "weights", static_cast<std::uint64_t>(kind), seed);
              w.resize(static_cast<std::size_t>(out.size()));
              for (auto& v : w) v = wr.uniform(-1.0f, 1.0f);
            }
            Tensor weights = g.constant(out.shape(), w);
            return g.mean_all(g.mul(out, weights));
          },
          c.inputs, 3e-3f, 2e-2f);
      REQUIRE_MESSAGE(report.pass, "kind=", kind_name, " seed=", seed,
                      " max_rel_err=", report.max_rel_err);
    }
  }
}

TEST_CASE("softmax outputs are nonnegative and rows sum to 1") {
  Rng rng = Rng::derive(7, "softmax-prop");
  for (int trial = 0; trial < 50; ++trial) {
    int rows = 1 + static_cast<int>(rng.uniform_int(4));
    int cols = 1 + static_cast<int>(rng.uniform_int(7));
    Graph g;
    Tensor y = g.softmax_lastdim(g.leaf(random_tensor({rows, cols}, rng, -5, 5)));
    auto v = y.values();
    for (int r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (int c = 0; c < cols; ++c) {
        float p = v[static_cast<std::size_t>(r * cols + c)];
        CHECK(p >= 0.0f);
        sum += p;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  Rng rng = Rng::derive(8, "ln-prop");
  for (int trial = 0; trial < 50; ++trial) {
    int rows = 1 + static_cast<int>(rng.uniform_int(3));
    int cols = 4 + static_cast<int>(rng.uniform_int(12));
    Graph g;
    Tensor y = g.layer_norm(g.leaf(random_tensor({rows, cols}, rng, -3, 3)), 1e-8f);
    auto v = y.values();
    for (int r = 0; r < rows; ++r) {
      double mean = 0.0, var = 0.0;
      for (int c = 0; c < cols; ++c) mean += v[static_cast<std::size_t>(r * cols + c)];
      mean /= cols;
      for (int c = 0; c < cols; ++c) {
        double d = v[static_cast<std::size_t>(r * cols + c)] - mean;
        var += d * d;
      }
      var /= cols;
      CHECK(std::fabs(mean) < 1e-5);
      CHECK(std::fabs(var - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("composed expression gradient matches finite differences") {
  Rng rng = Rng::derive(11, "composed");
  Tensor x = random_tensor({3, 4}, rng, -1, 1, true);
  Tensor w = random_tensor({4, 3}, rng, -1, 1, true);
  std::vector<Tensor> points{x, w};
  auto report = grad_check(
      [](Graph& g, std::span<const Tensor> xs) {
        Tensor h = g.gelu(g.matmul(xs[0], xs[1]));
        Tensor n = g.layer_norm(h, 1e-5f);
        Tensor p = g.softmax_lastdim(n);
        return g.mean_all(g.square(p));
      },
      points, 1e-3f, 1e-2f);
  CHECK_MESSAGE(report.pass, "max_rel_err=", report.max_rel_err);
}

TEST_CASE("tensors from one graph are rejected by another") {
  Graph g1;
  Tensor a = g1.constant({2}, std::vector<float>{1, 2});
  Graph g2;
  CHECK_THROWS_AS(g2.square(a), Error);
}

TEST_SUITE_END();
