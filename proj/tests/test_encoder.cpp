#include <doctest.h>

#include <cmath>

#include "mmv/encoder.hpp"
#include "mmv/grad_check.hpp"
#include "mmv/objective.hpp"
#include "support/test_util.hpp"

using namespace mmv;
using mmv::testing::random_tensor;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.depth = 2;
  cfg.d = 12;
  cfg.n_heads = 2;  // head_dim 6
  cfg.mlp_ratio = 2;
  cfg.patch = 2;
  cfg.channels = 1;
  return cfg;
}

Volume random_view(int z, int h, int w, Modality m, Rng& rng) {
  Volume v;
  v.c = 1;
  v.z = z;
  v.h = h;
  v.w = w;
  v.modality = m;
  v.data.resize(static_cast<std::size_t>(z) * h * w);
  for (auto& x : v.data) x = rng.uniform(-1, 1);
  return v;
}

// Pooled rows for a set of views under a given store.
std::vector<float> pooled_for(const std::vector<Volume>& views, const ParamStore& store,
                              const EncoderConfig& cfg) {
  Graph g;
  BoundParams params(g, store, false);
  PackedViews pv = pack_views(views, {}, cfg);
  PackedBatch batch = embed_views(g, pv, params, cfg);
  EncoderOutput out = encode(g, batch, params, cfg);
  return {out.pooled.values().begin(), out.pooled.values().end()};
}

}  // namespace

TEST_SUITE_BEGIN("encoder");

TEST_CASE("config validation catches bad head splits") {
  EncoderConfig cfg = tiny_config();
  cfg.n_heads = 3;  // d=12 -> head_dim 4, not divisible by 6
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny_config();
  cfg.d = 13;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("init is bit-reproducible from the seed") {
  EncoderConfig cfg = tiny_config();
  ParamStore a = init_params(cfg, 42);
  ParamStore b = init_params(cfg, 42);
  ParamStore c = init_params(cfg, 43);
  REQUIRE(a.entries.size() == b.entries.size());
  bool all_same = true, any_diff_seed = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    all_same &= a.entries[i].value == b.entries[i].value;
    any_diff_seed |= a.entries[i].value != c.entries[i].value;
  }
  CHECK(all_same);
  CHECK(any_diff_seed);
}

TEST_CASE("parameter count: closed form, store total, and hand count agree") {
  EncoderConfig cfg;
  cfg.depth = 2;
  cfg.d = 48;
  cfg.n_heads = 8;  // head_dim 6
  cfg.mlp_ratio = 4;
  cfg.patch = 14;
  cfg.channels = 1;
  ParamStore store = init_params(cfg, 1);
  // Independent hand count: embed 2744*48+48; per block 2*48 + 4*(48*48+48)
  // + 2*48 + 48*192+192 + 192*48+48; final ln 2*48.
  const std::int64_t embed = 2744 * 48 + 48;
  const std::int64_t block = 2 * 48 + 4 * (48 * 48 + 48) + 2 * 48 + 48 * 192 + 192 + 192 * 48 + 48;
  const std::int64_t hand = embed + 2 * block + 2 * 48;
  CHECK(param_count(cfg) == hand);
  CHECK(store.total_size() == hand);
}

TEST_CASE("depth-0 encoder pools the final-layernormed embedded tokens") {
  EncoderConfig cfg = tiny_config();
  cfg.depth = 0;
  ParamStore store = init_params(cfg, 5);
  Rng rng = Rng::derive(60, "depth0");
  std::vector<Volume> views{random_view(2, 2, 4, Modality::ct3d, rng)};
  Graph g;
  BoundParams params(g, store, false);
  PackedViews pv = pack_views(views, {}, cfg);
  PackedBatch batch = embed_views(g, pv, params, cfg);
  EncoderOutput out = encode(g, batch, params, cfg);

  Tensor normed = g.add(g.mul(g.layer_norm(batch.tokens, cfg.ln_eps), params["final_ln.g"]),
                        params["final_ln.b"]);
  Tensor expect = g.mean_rows(normed);
  REQUIRE(out.pooled.size() == expect.size());
  for (std::size_t i = 0; i < expect.values().size(); ++i) {
    CHECK(out.pooled.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-6));
  }
}

TEST_CASE("duplicating a sample in a batch duplicates its pooled embedding") {
  EncoderConfig cfg = tiny_config();
  ParamStore store = init_params(cfg, 6);
  Rng rng = Rng::derive(61, "dup");
  Volume v = random_view(2, 4, 4, Modality::ct3d, rng);
  auto pooled = pooled_for({v, v}, store, cfg);
  REQUIRE(pooled.size() == static_cast<std::size_t>(2 * cfg.d));
  for (int i = 0; i < cfg.d; ++i) {
    CHECK(pooled[static_cast<std::size_t>(i)] == pooled[static_cast<std::size_t>(cfg.d + i)]);
  }
}

TEST_CASE("a view's embedding does not depend on its packing neighbors") {
  EncoderConfig cfg = tiny_config();
  ParamStore store = init_params(cfg, 7);
  Rng rng = Rng::derive(62, "batch-invariance");
  Volume a = random_view(2, 4, 6, Modality::ct3d, rng);
  Volume b = random_view(2, 2, 2, Modality::ct3d, rng);
  Volume c = random_view(4, 4, 4, Modality::ct3d, rng);
  auto alone = pooled_for({a}, store, cfg);
  auto packed = pooled_for({b, a, c}, store, cfg);
  for (int i = 0; i < cfg.d; ++i) {
    CHECK(std::fabs(alone[static_cast<std::size_t>(i)] -
                    packed[static_cast<std::size_t>(cfg.d + i)]) < 1e-5f);
  }
}

TEST_CASE("2D samples and equivalent single-slice 3D volumes embed identically") {
  EncoderConfig cfg = tiny_config();
  ParamStore store = init_params(cfg, 8);
  Rng rng = Rng::derive(63, "2d3d");
  Volume img = random_view(1, 4, 6, Modality::xray2d, rng);
  // The ct3d twin holds the promoted pseudo-volume's voxels explicitly.
  Volume twin = promote_to_pseudo_volume(img, cfg.patch);
  twin.modality = Modality::ct3d;
  auto p2d = pooled_for({img}, store, cfg);
  auto p3d = pooled_for({twin}, store, cfg);
  REQUIRE(p2d.size() == p3d.size());
  for (std::size_t i = 0; i < p2d.size(); ++i) CHECK(p2d[i] == p3d[i]);
}

TEST_CASE("pooled outputs stay finite at initialization over many random samples") {
  EncoderConfig cfg = tiny_config();
  ParamStore store = init_params(cfg, 9);
  Rng rng = Rng::derive(64, "finite");
  int checked = 0;
  for (int round = 0; round < 20; ++round) {
    std::vector<Volume> views;
    for (int i = 0; i < 50; ++i) {
      views.push_back(random_view(2, 2 + 2 * static_cast<int>(rng.uniform_int(3)), 4,
                                  Modality::ct3d, rng));
    }
    auto pooled = pooled_for(views, store, cfg);
    for (float v : pooled) {
      REQUIRE(std::isfinite(v));
      ++checked;
    }
  }
  CHECK(checked == 20 * 50 * cfg.d);
}

TEST_CASE("encoder+objective gradient matches finite differences (depth 2, d 12)") {
  EncoderConfig cfg = tiny_config();
  ParamStore store = init_params(cfg, 10);
  Rng rng = Rng::derive(65, "encoder-grad");
  // Two views of one sample, two tokens each: a 2x2x4 volume at P=2.
  std::vector<Volume> views{random_view(2, 2, 4, Modality::ct3d, rng),
                            random_view(2, 2, 4, Modality::ct3d, rng)};
  PackedViews pv = pack_views(views, {}, cfg);
  std::vector<Tensor> points;
  points.reserve(store.entries.size());
  for (const auto& e : store.entries) {
    points.push_back(Tensor::from(e.shape, e.value, true));
  }
  std::vector<ViewGroup> groups{{0, 2, 1}};
  auto report = grad_check(
      [&](Graph& g, std::span<const Tensor> xs) {
        BoundParams params(store, xs);
        PackedBatch batch = embed_views(g, pv, params, cfg);
        EncoderOutput out = encode(g, batch, params, cfg);
        Tensor pred = batch_prediction_loss(g, out.pooled, groups);
        Tensor reg = sigreg_loss(g, out.pooled, 4, 3);
        return total_loss(g, pred, reg, 0.025f);
      },
      // Floor 3e-2: the float32 forward pass of a depth-2 graph carries about
      // 3e-4 of rounding noise into each central difference, so gradients
      // below the floor are held to the |a - fd| <= rtol * floor absolute
      // bound instead of a meaningless relative one.
      points, 1e-3f, 2e-2f, 3e-2f);
  CHECK_MESSAGE(report.pass, "max_rel_err=", report.max_rel_err);
}

TEST_CASE("gradient of mean squared pooled output w.r.t. parameters matches finite differences") {
  EncoderConfig cfg = tiny_config();
  ParamStore store = init_params(cfg, 11);
  Rng rng = Rng::derive(66, "pooled-grad");
  std::vector<Volume> views{random_view(2, 2, 4, Modality::ct3d, rng)};
  PackedViews pv = pack_views(views, {}, cfg);
  std::vector<Tensor> points;
  for (const auto& e : store.entries) points.push_back(Tensor::from(e.shape, e.value, true));
  auto report = grad_check(
      [&](Graph& g, std::span<const Tensor> xs) {
        BoundParams params(store, xs);
        PackedBatch batch = embed_views(g, pv, params, cfg);
        EncoderOutput out = encode(g, batch, params, cfg);
        return g.mean_all(g.square(out.pooled));
      },
      points, 1e-3f, 2e-2f, 3e-2f);
  CHECK_MESSAGE(report.pass, "max_rel_err=", report.max_rel_err);
}

TEST_SUITE_END();
