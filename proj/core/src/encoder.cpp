#include "mmv/encoder.hpp"

#include <cmath>
#include <cstdio>

#include "mmv/hashing.hpp"
#include "mmv/rng.hpp"

namespace mmv {

void EncoderConfig::validate() const {
  if (depth < 0) fail("encoder depth must be >= 0");
  if (d <= 0 || n_heads <= 0 || d % n_heads != 0) {
    fail("embed dim " + std::to_string(d) + " must be a positive multiple of n_heads " +
         std::to_string(n_heads));
  }
  if (head_dim() % 6 != 0) {
    fail("head_dim " + std::to_string(head_dim()) + " must divide by 6 for 3-axis rotary pairs");
  }
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (patch < 1) fail("patch size must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (alpha <= 0.0f) fail("alpha must be positive");
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  for (auto& e : entries) {
    if (e.name == name) return e;
  }
  fail("unknown parameter " + name);
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  fail("unknown parameter " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const auto& e : entries) n += static_cast<std::int64_t>(e.value.size());
  return n;
}

BoundParams::BoundParams(Graph& g, const ParamStore& store, bool requires_grad) {
  tensors_.reserve(store.entries.size());
  for (const auto& e : store.entries) {
    tensors_.push_back(g.leaf(e.shape, e.value, requires_grad));
    index_[e.name] = tensors_.size() - 1;
  }
}

BoundParams::BoundParams(const ParamStore& store, std::span<const Tensor> bound) {
  if (bound.size() != store.entries.size()) {
    fail("BoundParams: expected " + std::to_string(store.entries.size()) + " tensors, got " +
         std::to_string(bound.size()));
  }
  tensors_.assign(bound.begin(), bound.end());
  for (std::size_t i = 0; i < store.entries.size(); ++i) {
    if (tensors_[i].shape() != store.entries[i].shape) {
      fail("BoundParams: shape mismatch for " + store.entries[i].name);
    }
    index_[store.entries[i].name] = i;
  }
}

const Tensor& BoundParams::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail("unknown parameter " + name);
  return tensors_[it->second];
}

namespace {

// The parameter layout; shapes depend only on the config.
struct ParamSpec {
  std::string name;
  Shape shape;
  bool no_decay;
  enum class Init { trunc_normal, zeros, ones } init;
};

std::vector<ParamSpec> param_specs(const EncoderConfig& cfg) {
  using Init = ParamSpec::Init;
  std::vector<ParamSpec> specs;
  specs.push_back({"patch_embed.w", {cfg.patch_dim(), cfg.d}, false, Init::trunc_normal});
  specs.push_back({"patch_embed.b", {cfg.d}, false, Init::zeros});
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    specs.push_back({p + "ln1.g", {cfg.d}, true, Init::ones});
    specs.push_back({p + "ln1.b", {cfg.d}, true, Init::zeros});
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      specs.push_back({p + "attn." + w, {cfg.d, cfg.d}, false, Init::trunc_normal});
    }
    for (const char* b : {"bq", "bk", "bv", "bo"}) {
      specs.push_back({p + "attn." + b, {cfg.d}, false, Init::zeros});
    }
    specs.push_back({p + "ln2.g", {cfg.d}, true, Init::ones});
    specs.push_back({p + "ln2.b", {cfg.d}, true, Init::zeros});
    specs.push_back({p + "mlp.w1", {cfg.d, cfg.mlp_ratio * cfg.d}, false, Init::trunc_normal});
    specs.push_back({p + "mlp.b1", {cfg.mlp_ratio * cfg.d}, false, Init::zeros});
    specs.push_back({p + "mlp.w2", {cfg.mlp_ratio * cfg.d, cfg.d}, false, Init::trunc_normal});
    specs.push_back({p + "mlp.b2", {cfg.d}, false, Init::zeros});
  }
  specs.push_back({"final_ln.g", {cfg.d}, true, Init::ones});
  specs.push_back({"final_ln.b", {cfg.d}, true, Init::zeros});
  return specs;
}

}  // namespace

ParamStore init_params(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store;
  auto specs = param_specs(cfg);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ParamSpec& spec = specs[i];
    ParamStore::Entry e;
    e.name = spec.name;
    e.shape = spec.shape;
    e.no_decay = spec.no_decay;
    e.value.resize(static_cast<std::size_t>(numel(spec.shape)));
    switch (spec.init) {
      case ParamSpec::Init::trunc_normal: {
        Rng rng = Rng::derive(seed, "init", i);
        for (auto& v : e.value) v = rng.trunc_normal(0.02f);
        break;
      }
      case ParamSpec::Init::zeros:
        break;  // already zero
      case ParamSpec::Init::ones:
        std::fill(e.value.begin(), e.value.end(), 1.0f);
        break;
    }
    store.entries.push_back(std::move(e));
  }
  return store;
}

std::int64_t param_count(const EncoderConfig& cfg) {
  const std::int64_t d = cfg.d;
  const std::int64_t hidden = static_cast<std::int64_t>(cfg.mlp_ratio) * d;
  const std::int64_t embed = static_cast<std::int64_t>(cfg.patch_dim()) * d + d;
  const std::int64_t per_block = 2 * d                    // ln1
                                 + 4 * (d * d + d)        // q,k,v,o projections
                                 + 2 * d                  // ln2
                                 + d * hidden + hidden    // mlp in
                                 + hidden * d + d;        // mlp out
  return embed + cfg.depth * per_block + 2 * d;  // + final layernorm
}

std::uint64_t config_digest(const EncoderConfig& cfg) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "depth=%d;d=%d;n_heads=%d;mlp_ratio=%d;patch=%d;channels=%d;alpha=%.9g;"
                "rope_base=%.9g;ln_eps=%.9g",
                cfg.depth, cfg.d, cfg.n_heads, cfg.mlp_ratio, cfg.patch, cfg.channels,
                static_cast<double>(cfg.alpha), static_cast<double>(cfg.rope_base),
                static_cast<double>(cfg.ln_eps));
  return fnv1a64(std::string_view(buf));
}

PackedViews pack_views(std::span<const Volume> views, std::span<const SampleMeta> meta,
                       const EncoderConfig& cfg) {
  if (views.empty()) fail("pack_views: empty view list");
  if (!meta.empty() && meta.size() != views.size()) {
    fail("pack_views: meta count does not match view count");
  }
  PackedViews out;
  out.patch_dim = cfg.patch_dim();
  out.boundaries.push_back(0);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Volume* v = &views[i];
    Volume promoted;
    if (v->modality == Modality::xray2d && v->z == 1) {
      promoted = promote_to_pseudo_volume(*v, cfg.patch);
      v = &promoted;
    }
    if (v->c != cfg.channels) {
      fail("pack_views: view " + std::to_string(i) + " has " + std::to_string(v->c) +
           " channels, config expects " + std::to_string(cfg.channels));
    }
    PatchSequence seq = patchify(*v, cfg.patch, cfg.alpha);
    out.patches.insert(out.patches.end(), seq.patches.begin(), seq.patches.end());
    out.coords.insert(out.coords.end(), seq.coords.begin(), seq.coords.end());
    out.boundaries.push_back(out.boundaries.back() + static_cast<int>(seq.grid.count()));
    SampleMeta m = meta.empty() ? SampleMeta{} : meta[i];
    m.grid = seq.grid;
    out.meta.push_back(m);
  }
  return out;
}

PackedBatch embed_views(Graph& g, const PackedViews& views, const BoundParams& params,
                        const EncoderConfig& cfg) {
  const int total = views.total_tokens();
  if (total <= 0) fail("embed_views: no tokens");
  Tensor raw = g.constant({total, views.patch_dim}, views.patches);
  PackedBatch batch;
  batch.tokens = embed_patches(g, raw, params["patch_embed.w"], params["patch_embed.b"]);
  batch.boundaries = views.boundaries;
  batch.coords = views.coords;
  batch.meta = views.meta;
  batch.validate();
  return batch;
}

EncoderOutput encode(Graph& g, const PackedBatch& batch, const BoundParams& params,
                     const EncoderConfig& cfg) {
  cfg.validate();
  batch.validate();
  if (batch.tokens.dim(1) != cfg.d) {
    fail("encode: token width " + std::to_string(batch.tokens.dim(1)) + " != config d = " +
         std::to_string(cfg.d));
  }
  const int total = batch.tokens.dim(0);
  const RopeTable rope = build_rope_table(cfg.head_dim(), cfg.rope_base);

  auto affine_ln = [&](const Tensor& x, const std::string& prefix) {
    Tensor normed = g.layer_norm(x, cfg.ln_eps);
    return g.add(g.mul(normed, params[prefix + ".g"]), params[prefix + ".b"]);
  };
  auto linear = [&](const Tensor& x, const std::string& w, const std::string& b) {
    return g.add(g.matmul(x, params[w]), params[b]);
  };

  Tensor x = batch.tokens;
  for (int layer = 0; layer < cfg.depth; ++layer) {
    const std::string p = "blocks." + std::to_string(layer) + ".";
    Tensor normed = affine_ln(x, p + "ln1");
    const Shape heads_shape{total, cfg.n_heads, cfg.head_dim()};
    Tensor q = apply_rope(g, g.reshape(linear(normed, p + "attn.wq", p + "attn.bq"), heads_shape),
                          batch.coords, rope);
    Tensor k = apply_rope(g, g.reshape(linear(normed, p + "attn.wk", p + "attn.bk"), heads_shape),
                          batch.coords, rope);
    Tensor v = g.reshape(linear(normed, p + "attn.wv", p + "attn.bv"), heads_shape);
    Tensor att = g.reshape(packed_attention(g, q, k, v, batch.boundaries), {total, cfg.d});
    x = g.add(x, linear(att, p + "attn.wo", p + "attn.bo"));

    Tensor normed2 = affine_ln(x, p + "ln2");
    Tensor hidden = g.gelu(linear(normed2, p + "mlp.w1", p + "mlp.b1"));
    x = g.add(x, linear(hidden, p + "mlp.w2", p + "mlp.b2"));
  }

  EncoderOutput out;
  out.token_features = affine_ln(x, "final_ln");
  out.pooled = segment_mean_pool(g, out.token_features, batch.boundaries);
  return out;
}

}  // namespace mmv
