#include "mmv/objective.hpp"

#include <cmath>
#include <string>

#include "mmv/rng.hpp"

namespace mmv {

void ObjectiveConfig::validate() const {
  if (lambda < 0.0f || lambda > 1.0f) fail("lambda must lie in [0, 1]");
  if (n_directions < 1) fail("n_directions must be >= 1");
}

Tensor prediction_loss(Graph& g, const Tensor& views, int n_global) {
  if (views.rank() != 2) fail("prediction_loss: views must be [V, d]");
  const int v = views.dim(0);
  if (n_global < 1) fail("prediction_loss: V_g must be >= 1");
  if (n_global > v) {
    fail("prediction_loss: V_g = " + std::to_string(n_global) + " exceeds view count " +
         std::to_string(v));
  }
  Tensor centroid = g.mean_rows(g.slice_rows(views, 0, n_global));
  Tensor diffs = g.sub(views, centroid);
  return g.scale(g.sum_all(g.square(diffs)), 1.0f / static_cast<float>(v));
}

Tensor batch_prediction_loss(Graph& g, const Tensor& pooled, std::span<const ViewGroup> groups) {
  if (groups.empty()) fail("batch_prediction_loss: no view groups");
  std::vector<Tensor> losses;
  losses.reserve(groups.size());
  for (const ViewGroup& grp : groups) {
    Tensor views = g.slice_rows(pooled, grp.begin, grp.end);
    losses.push_back(prediction_loss(g, views, grp.n_global));
  }
  return g.mean_all(g.concat_rows(losses));
}

namespace {

constexpr double kInvSqrt3 = 0.5773502691896258;
constexpr double kSqrt2 = 1.4142135623730951;

// T and dT/dx for one sample vector (stride walks a packed projection column).
double ep_forward(const float* x, std::size_t n, std::size_t stride) {
  double pair_sum = 0.0, self_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double xj = x[j * stride];
    self_sum += std::exp(-xj * xj / 4.0);
    for (std::size_t k = 0; k < n; ++k) {
      const double d = xj - x[k * stride];
      pair_sum += std::exp(-d * d / 2.0);
    }
  }
  return pair_sum / static_cast<double>(n) - kSqrt2 * self_sum +
         static_cast<double>(n) * kInvSqrt3;
}

void ep_backward(const float* x, std::size_t n, std::size_t stride, double upstream,
                 float* grad_out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i * stride];
    double pair_term = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = xi - x[k * stride];
      pair_term += d * std::exp(-d * d / 2.0);
    }
    const double g = -2.0 * pair_term / static_cast<double>(n) +
                     (xi / kSqrt2) * std::exp(-xi * xi / 4.0);
    grad_out[i * stride] += static_cast<float>(upstream * g);
  }
}

}  // namespace

double ep_statistic_value(std::span<const float> x) {
  if (x.empty()) fail("ep_statistic: empty sample");
  if (!all_finite(x)) fail("ep_statistic: non-finite input");
  return ep_forward(x.data(), x.size(), 1);
}

Tensor ep_statistic(Graph& g, const Tensor& x) {
  if (x.rank() != 1 || x.size() < 1) fail("ep_statistic: expected a nonempty vector");
  if (!all_finite(x.values())) fail("ep_statistic: non-finite input");
  const std::size_t n = static_cast<std::size_t>(x.size());
  std::vector<float> out{static_cast<float>(ep_forward(x.values().data(), n, 1))};
  return g.custom_op("ep_statistic", {1}, std::move(out), std::span<const Tensor>(&x, 1),
                     [n](Graph::BackwardCtx& ctx) {
                       if (!ctx.needs_grad(0)) return;
                       ep_backward(ctx.in_value(0).data(), n, 1,
                                   static_cast<double>(ctx.out_grad()[0]), ctx.in_grad(0).data());
                     });
}

Tensor sigreg_loss(Graph& g, const Tensor& embeddings, int n_directions, std::uint64_t seed) {
  if (embeddings.rank() != 2) fail("sigreg_loss: embeddings must be [N, d]");
  const int n = embeddings.dim(0);
  const int d = embeddings.dim(1);
  if (n < 2) fail("sigreg_loss: needs at least 2 embeddings, got " + std::to_string(n));
  if (n_directions < 1) fail("sigreg_loss: n_directions must be >= 1");

  // d x M matrix of unit directions; data, not parameters.
  std::vector<float> dirs(static_cast<std::size_t>(d) * n_directions);
  for (int m = 0; m < n_directions; ++m) {
    Rng rng = Rng::derive(seed, "sigreg-direction", static_cast<std::uint64_t>(m));
    std::vector<float> u = rng.unit_vector(d);
    for (int j = 0; j < d; ++j) {
      dirs[static_cast<std::size_t>(j) * n_directions + m] = u[static_cast<std::size_t>(j)];
    }
  }
  Tensor proj = g.matmul(embeddings, g.constant({d, n_directions}, dirs));

  const std::size_t rows = static_cast<std::size_t>(n);
  const std::size_t cols = static_cast<std::size_t>(n_directions);
  double acc = 0.0;
  for (std::size_t m = 0; m < cols; ++m) {
    acc += ep_forward(proj.values().data() + m, rows, cols) / static_cast<double>(rows);
  }
  std::vector<float> out{static_cast<float>(acc / static_cast<double>(cols))};
  return g.custom_op("sigreg", {1}, std::move(out), std::span<const Tensor>(&proj, 1),
                     [rows, cols](Graph::BackwardCtx& ctx) {
                       if (!ctx.needs_grad(0)) return;
                       const double upstream = static_cast<double>(ctx.out_grad()[0]) /
                                               (static_cast<double>(rows) * static_cast<double>(cols));
                       for (std::size_t m = 0; m < cols; ++m) {
                         ep_backward(ctx.in_value(0).data() + m, rows, cols, upstream,
                                     ctx.in_grad(0).data() + m);
                       }
                     });
}

Tensor total_loss(Graph& g, const Tensor& pred, const Tensor& sigreg, float lambda) {
  if (pred.size() != 1 || sigreg.size() != 1) fail("total_loss: inputs must be scalars");
  if (!std::isfinite(pred.item()) || !std::isfinite(sigreg.item())) {
    fail("total_loss: non-finite loss component");
  }
  return g.add(g.scale(pred, 1.0f - lambda), g.scale(sigreg, lambda));
}

}  // namespace mmv
