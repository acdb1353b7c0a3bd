#include <doctest.h>

#include <cmath>

#include "mmv/grad_check.hpp"
#include "mmv/objective.hpp"
#include "mmv/rng.hpp"
#include "support/ep_quadrature_oracle.hpp"
#include "support/test_util.hpp"

using namespace mmv;
using mmv::testing::ep_statistic_quadrature;
using mmv::testing::random_tensor;

TEST_SUITE_BEGIN("objective");

TEST_CASE("prediction loss is zero when all views coincide") {
  Graph g;
  std::vector<float> data;
  for (int i = 0; i < 5; ++i) {
    data.push_back(0.3f);
    data.push_back(-0.7f);
  }
  Tensor views = g.leaf(Tensor({5, 2}, std::move(data)));
  Tensor loss = prediction_loss(g, views, 2);
  CHECK(loss.item() == doctest::Approx(0.0f));
}

TEST_CASE("prediction loss hand case: two globals at (0,0) and (2,0)") {
  Graph g;
  Tensor views = g.leaf(Tensor({2, 2}, std::vector<float>{0, 0, 2, 0}));
  Tensor loss = prediction_loss(g, views, 2);
  // centroid (1,0); each view at squared distance 1; mean over V=2 views = 1
  CHECK(loss.item() == doctest::Approx(1.0f));
}

TEST_CASE("prediction loss with a single global reduces to distances from it") {
  Graph g;
  // global at origin, two locals at (1,0) and (0,2)
  Tensor views = g.leaf(Tensor({3, 2}, std::vector<float>{0, 0, 1, 0, 0, 2}));
  Tensor loss = prediction_loss(g, views, 1);
  CHECK(loss.item() == doctest::Approx((0.0f + 1.0f + 4.0f) / 3.0f));
}

TEST_CASE("prediction loss rejects zero global views") {
  Graph g;
  Tensor views = g.leaf(Tensor({2, 2}, std::vector<float>{0, 0, 1, 1}));
  CHECK_THROWS_AS(prediction_loss(g, views, 0), Error);
}

TEST_CASE("prediction loss is invariant under a common rotation") {
  Rng rng = Rng::derive(50, "pred-rot");
  const int v = 6, d = 4, n_global = 2;
  Tensor views = random_tensor({v, d}, rng);
  // Gram-Schmidt a random matrix into an orthogonal rotation.
  std::vector<std::vector<double>> q(d, std::vector<double>(d));
  for (auto& row : q) {
    for (auto& x : row) x = rng.normal();
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += q[i][k] * q[j][k];
      for (int k = 0; k < d; ++k) q[i][k] -= dot * q[j][k];
    }
    double norm = 0.0;
    for (int k = 0; k < d; ++k) norm += q[i][k] * q[i][k];
    norm = std::sqrt(norm);
    for (int k = 0; k < d; ++k) q[i][k] /= norm;
  }
  std::vector<float> rotated(static_cast<std::size_t>(v) * d);
  for (int r = 0; r < v; ++r) {
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        acc += q[i][k] * views.values()[static_cast<std::size_t>(r) * d + k];
      }
      rotated[static_cast<std::size_t>(r) * d + i] = static_cast<float>(acc);
    }
  }
  Graph g;
  float before = prediction_loss(g, g.leaf(views), n_global).item();
  float after = prediction_loss(g, g.leaf(Tensor({v, d}, std::move(rotated))), n_global).item();
  CHECK(std::fabs(before - after) < 1e-5f);
}

TEST_CASE("ep statistic anchors: N=1 at zero and N=2 at zeros") {
  CHECK(std::fabs(ep_statistic_value(std::vector<float>{0.0f}) - 0.16314) < 1e-4);
  CHECK(std::fabs(ep_statistic_value(std::vector<float>{0.0f, 0.0f}) - 0.32627) < 1e-4);
}

TEST_CASE("ep statistic rejects non-finite input") {
  std::vector<float> bad{0.0f, std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS_AS(ep_statistic_value(bad), Error);
}

TEST_CASE("ep statistic agrees with the quadrature oracle") {
  Rng rng = Rng::derive(51, "ep-quad");
  for (int trial = 0; trial < 10; ++trial) {
    const int n = trial < 5 ? 200 : 1 + static_cast<int>(rng.uniform_int(40));
    std::vector<float> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = trial % 2 ? rng.normal() : rng.uniform(-2.0f, 2.0f);
    const double closed = ep_statistic_value(x);
    const double quad = ep_statistic_quadrature(x);
    CHECK_MESSAGE(std::fabs(closed - quad) < 1e-3, "closed=", closed, " quad=", quad, " n=", n);
  }
}

TEST_CASE("ep statistic graph op matches the plain value and differentiates") {
  Rng rng = Rng::derive(52, "ep-grad");
  Tensor x = random_tensor({7}, rng, -2, 2, true);
  {
    Graph g;
    Tensor t = ep_statistic(g, g.leaf(x));
    CHECK(t.item() == doctest::Approx(static_cast<float>(ep_statistic_value(x.values()))));
  }
  auto report = grad_check(
      [](Graph& g, std::span<const Tensor> xs) { return ep_statistic(g, xs[0]); }, x, 1e-3f,
      1e-2f);
  CHECK_MESSAGE(report.pass, "max_rel_err=", report.max_rel_err);
}

TEST_CASE("collapsed batches score above large standard-normal batches") {
  Rng rng = Rng::derive(53, "sigreg-collapse");
  const int n = 256, d = 8, m = 32;
  // collapsed: every row equals one nonzero point
  std::vector<float> point(d);
  for (auto& v : point) v = rng.uniform(-1.0f, 1.0f);
  std::vector<float> collapsed;
  for (int i = 0; i < n; ++i) collapsed.insert(collapsed.end(), point.begin(), point.end());
  Graph g;
  float collapsed_loss =
      sigreg_loss(g, g.leaf(Tensor({n, d}, std::move(collapsed))), m, 7).item();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng nr = Rng::derive(seed, "sigreg-normal");
    std::vector<float> gauss(static_cast<std::size_t>(n) * d);
    for (auto& v : gauss) v = nr.normal();
    float gauss_loss = sigreg_loss(g, g.leaf(Tensor({n, d}, std::move(gauss))), m, 7).item();
    CHECK(collapsed_loss > gauss_loss);
  }
  // the collapsed value approaches the closed-form floor 1 - sqrt(2) e^{-(u.c)^2/4} + 1/sqrt(3) > 0
  CHECK(collapsed_loss > 0.05f);
}

TEST_CASE("sigreg is invariant to row permutations") {
  Rng rng = Rng::derive(54, "sigreg-perm");
  const int n = 32, d = 6;
  Tensor e = random_tensor({n, d}, rng);
  auto perm = rng.permutation(n);
  std::vector<float> shuffled(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      shuffled[static_cast<std::size_t>(i) * d + j] =
          e.values()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]) * d + j];
    }
  }
  Graph g;
  float a = sigreg_loss(g, g.leaf(e), 16, 11).item();
  float b = sigreg_loss(g, g.leaf(Tensor({n, d}, std::move(shuffled))), 16, 11).item();
  CHECK(a == doctest::Approx(b).epsilon(1e-5));
}

TEST_CASE("scaling unit-variance embeddings by 10 increases the loss") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng = Rng::derive(seed, "sigreg-scale");
    const int n = 128, d = 8;
    std::vector<float> unit(static_cast<std::size_t>(n) * d);
    for (auto& v : unit) v = rng.normal();
    std::vector<float> big(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) big[i] = 10.0f * unit[i];
    Graph g;
    float u = sigreg_loss(g, g.leaf(Tensor({n, d}, std::move(unit))), 32, 3).item();
    float b = sigreg_loss(g, g.leaf(Tensor({n, d}, std::move(big))), 32, 3).item();
    CHECK(b > u);
  }
}

TEST_CASE("sigreg rejects fewer than two embeddings") {
  Graph g;
  Rng rng = Rng::derive(55, "sigreg-small");
  Tensor one = g.leaf(random_tensor({1, 4}, rng));
  CHECK_THROWS_AS(sigreg_loss(g, one, 8, 1), Error);
}

TEST_CASE("total loss arithmetic") {
  Graph g;
  Tensor pred = g.constant_scalar(1.0f);
  Tensor reg = g.constant_scalar(3.0f);
  CHECK(total_loss(g, pred, reg, 0.0f).item() == doctest::Approx(1.0f));
  CHECK(total_loss(g, pred, reg, 1.0f).item() == doctest::Approx(3.0f));
  CHECK(total_loss(g, pred, reg, 0.025f).item() == doctest::Approx(1.05f));
}

TEST_CASE("gradient of the combined objective matches finite differences") {
  Rng rng = Rng::derive(56, "objective-grad");
  const int n_samples = 3, v = 3, n_global = 1, d = 5;
  Tensor pooled = random_tensor({n_samples * v, d}, rng, -1, 1, true);
  std::vector<ViewGroup> groups;
  for (int s = 0; s < n_samples; ++s) groups.push_back({s * v, (s + 1) * v, n_global});
  auto report = grad_check(
      [&](Graph& g, std::span<const Tensor> xs) {
        Tensor pred = batch_prediction_loss(g, xs[0], groups);
        Tensor reg = sigreg_loss(g, xs[0], 8, 17);
        return total_loss(g, pred, reg, 0.025f);
      },
      pooled, 1e-3f, 2e-2f);
  CHECK_MESSAGE(report.pass, "max_rel_err=", report.max_rel_err);
}

TEST_SUITE_END();
