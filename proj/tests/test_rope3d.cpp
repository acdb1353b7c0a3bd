#include <doctest.h>

#include <cmath>

#include "mmv/grad_check.hpp"
#include "mmv/rope3d.hpp"
#include "mmv/tokenizer.hpp"
#include "support/test_util.hpp"

using namespace mmv;
using mmv::testing::random_tensor;

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

Tensor rope_once(const Tensor& vecs, const std::vector<float>& coords, const RopeTable& table) {
  Graph g;
  return apply_rope(g, g.leaf(vecs), coords, table);
}

}  // namespace

TEST_SUITE_BEGIN("rope3d");

TEST_CASE("table: head_dim=6 gives one unit frequency per axis") {
  RopeTable t = build_rope_table(6, 10000.0f);
  REQUIRE(t.freqs.size() == 1);
  CHECK(t.freqs[0] == 1.0f);
}

TEST_CASE("table: head_dim=12 gives frequencies [1, 0.01]") {
  RopeTable t = build_rope_table(12, 10000.0f);
  REQUIRE(t.freqs.size() == 2);
  CHECK(t.freqs[0] == 1.0f);
  CHECK(t.freqs[1] == doctest::Approx(0.01f));
}

TEST_CASE("table: base=1 collapses all frequencies to 1") {
  RopeTable t = build_rope_table(24, 1.0f);
  for (float f : t.freqs) CHECK(f == 1.0f);
}

TEST_CASE("table rejects head_dim not divisible by 6") {
  CHECK_THROWS_AS(build_rope_table(8), Error);
  CHECK_THROWS_AS(build_rope_table(0), Error);
}

TEST_CASE("zero coordinates leave vectors untouched") {
  Rng rng = Rng::derive(20, "rope-zero");
  RopeTable t = build_rope_table(12);
  Tensor v = random_tensor({4, 2, 12}, rng);
  std::vector<float> coords(4 * 3, 0.0f);
  Tensor out = rope_once(v, coords, t);
  for (std::size_t i = 0; i < v.values().size(); ++i) CHECK(out.values()[i] == v.values()[i]);
}

TEST_CASE("quarter turn rotates (1,0) into (0,1)") {
  RopeTable t = build_rope_table(6);  // one pair per axis, frequency 1
  Tensor v = Tensor::from({1, 1, 6}, std::vector<float>{1, 0, 0, 0, 0, 0});
  std::vector<float> coords{static_cast<float>(M_PI / 2), 0.0f, 0.0f};
  Tensor out = rope_once(v, coords, t);
  CHECK(std::fabs(out.values()[0] - 0.0f) < 1e-5);
  CHECK(std::fabs(out.values()[1] - 1.0f) < 1e-5);
  for (int i = 2; i < 6; ++i) CHECK(out.values()[static_cast<std::size_t>(i)] == doctest::Approx(0.0f));
}

TEST_CASE("norms are preserved over random draws") {
  Rng rng = Rng::derive(21, "rope-norm");
  RopeTable t = build_rope_table(12);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor v = random_tensor({3, 2, 12}, rng, -2, 2);
    std::vector<float> coords(9);
    for (auto& c : coords) c = rng.uniform(0.0f, 128.0f);
    Tensor out = rope_once(v, coords, t);
    for (int tok = 0; tok < 3; ++tok) {
      for (int hd = 0; hd < 2; ++hd) {
        auto iv = v.values().subspan(static_cast<std::size_t>(tok * 2 + hd) * 12, 12);
        auto ov = out.values().subspan(static_cast<std::size_t>(tok * 2 + hd) * 12, 12);
        CHECK(std::fabs(norm(iv) - norm(ov)) < 1e-5);
      }
    }
  }
}

TEST_CASE("q.k depends only on per-axis coordinate differences") {
  Rng rng = Rng::derive(22, "rope-shift");
  RopeTable t = build_rope_table(18);
  int worst_trial = -1;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor q = random_tensor({1, 1, 18}, rng);
    Tensor k = random_tensor({1, 1, 18}, rng);
    std::vector<float> c1(3), c2(3), shift(3);
    for (int a = 0; a < 3; ++a) {
      c1[static_cast<std::size_t>(a)] = rng.uniform(0.0f, 64.0f);
      c2[static_cast<std::size_t>(a)] = rng.uniform(0.0f, 64.0f);
      shift[static_cast<std::size_t>(a)] = rng.uniform(0.0f, 64.0f);
    }
    std::vector<float> c1s(3), c2s(3);
    for (int a = 0; a < 3; ++a) {
      c1s[static_cast<std::size_t>(a)] = c1[static_cast<std::size_t>(a)] + shift[static_cast<std::size_t>(a)];
      c2s[static_cast<std::size_t>(a)] = c2[static_cast<std::size_t>(a)] + shift[static_cast<std::size_t>(a)];
    }
    double before = dot(rope_once(q, c1, t).values(), rope_once(k, c2, t).values());
    double after = dot(rope_once(q, c1s, t).values(), rope_once(k, c2s, t).values());
    double err = std::fabs(before - after);
    if (err > worst) {
      worst = err;
      worst_trial = trial;
    }
  }
  CHECK_MESSAGE(worst < 1e-4, "worst shift-invariance error ", worst, " at trial ", worst_trial);
}

TEST_CASE("degenerate grid axes (g=1, g=2) keep coordinates valid for rotation") {
  Rng rng = Rng::derive(23, "rope-degenerate");
  RopeTable t = build_rope_table(12);
  for (GridShape grid : {GridShape{1, 2, 2}, GridShape{2, 1, 2}, GridShape{1, 1, 2}}) {
    auto coords = grid_coords(grid, 128.0f);
    const int s = static_cast<int>(grid.count());
    Tensor v = random_tensor({s, 1, 12}, rng);
    Tensor out = rope_once(v, coords, t);
    CHECK(all_finite(out.values()));
    for (int tok = 0; tok < s; ++tok) {
      auto iv = v.values().subspan(static_cast<std::size_t>(tok) * 12, 12);
      auto ov = out.values().subspan(static_cast<std::size_t>(tok) * 12, 12);
      CHECK(std::fabs(norm(iv) - norm(ov)) < 1e-5);
    }
  }
}

TEST_CASE("depth coordinate zero leaves the depth block unrotated (2D consistency)") {
  Rng rng = Rng::derive(24, "rope-2d");
  RopeTable t = build_rope_table(12);
  Tensor v = random_tensor({2, 1, 12}, rng);
  std::vector<float> coords{0.0f, 30.0f, 50.0f, 0.0f, 70.0f, 10.0f};
  Tensor out = rope_once(v, coords, t);
  // depth block = components [0, head_dim/3)
  for (int tok = 0; tok < 2; ++tok) {
    for (int i = 0; i < 4; ++i) {
      CHECK(out.values()[static_cast<std::size_t>(tok * 12 + i)] ==
            v.values()[static_cast<std::size_t>(tok * 12 + i)]);
    }
  }
}

TEST_CASE("rope rejects shape mismatches") {
  Graph g;
  RopeTable t = build_rope_table(12);
  Rng rng = Rng::derive(25, "rope-err");
  Tensor bad_dim = g.leaf(random_tensor({2, 1, 10}, rng));
  std::vector<float> coords(6, 0.0f);
  CHECK_THROWS_AS(apply_rope(g, bad_dim, coords, t), Error);
  Tensor ok = g.leaf(random_tensor({2, 1, 12}, rng));
  std::vector<float> short_coords(3, 0.0f);
  CHECK_THROWS_AS(apply_rope(g, ok, short_coords, t), Error);
}

TEST_CASE("rotation gradient matches finite differences") {
  Rng rng = Rng::derive(26, "rope-grad");
  RopeTable t = build_rope_table(12);
  Tensor v = random_tensor({3, 2, 12}, rng, -1, 1, true);
  std::vector<float> coords(9);
  for (auto& c : coords) c = rng.uniform(0.0f, 128.0f);
  std::vector<float> w(3 * 2 * 12);
  for (auto& x : w) x = rng.uniform(-1, 1);
  auto report = grad_check(
      [&](Graph& g, std::span<const Tensor> xs) {
        Tensor out = apply_rope(g, xs[0], coords, t);
        Tensor weights = g.constant(out.shape(), w);
        return g.mean_all(g.mul(out, weights));
      },
      v, 1e-3f, 1e-2f);
  CHECK_MESSAGE(report.pass, "max_rel_err=", report.max_rel_err);
}

TEST_SUITE_END();
