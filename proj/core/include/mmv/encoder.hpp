// Pre-norm transformer over packed token sequences with 3D rotary attention.
//
// Every view is one packed segment; attention and pooling never cross segment
// boundaries, so a view's embedding does not depend on what it was batched
// with. Pooling is the mean over the view's tokens after the final layernorm.
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mmv/graph.hpp"
#include "mmv/packing.hpp"
#include "mmv/rope3d.hpp"
#include "mmv/tokenizer.hpp"

namespace mmv {

struct EncoderConfig {
  int depth = 4;
  int d = 96;
  int n_heads = 2;
  int mlp_ratio = 4;
  int patch = 14;
  int channels = 1;
  float alpha = 128.0f;
  float rope_base = 10000.0f;
  float ln_eps = 1e-5f;

  int head_dim() const { return d / n_heads; }
  int patch_dim() const { return channels * patch * patch * patch; }
  void validate() const;
};

// Named parameter arrays in a fixed order. no_decay marks layernorm scales and
// biases, which the optimizer exempts from weight decay.
struct ParamStore {
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> value;
    bool no_decay = false;
  };
  std::vector<Entry> entries;

  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  bool has(const std::string& name) const;
  std::int64_t total_size() const;
};

// Per-step graph binding of a ParamStore.
class BoundParams {
 public:
  BoundParams(Graph& g, const ParamStore& store, bool requires_grad);
  // Adopt tensors already bound to a graph, in store order (gradient checks).
  BoundParams(const ParamStore& store, std::span<const Tensor> bound);
  const Tensor& operator[](const std::string& name) const;
  const std::vector<Tensor>& tensors() const { return tensors_; }

 private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Raw packed views before embedding: flattened patches of all views of all
// samples in batch order.
struct PackedViews {
  std::vector<float> patches;  // total x patch_dim
  int patch_dim = 0;
  std::vector<int> boundaries;
  std::vector<float> coords;
  std::vector<SampleMeta> meta;
  int total_tokens() const { return boundaries.empty() ? 0 : boundaries.back(); }
};

// Patchify every view (promoting 2D inputs) and concatenate.
PackedViews pack_views(std::span<const Volume> views, std::span<const SampleMeta> meta,
                       const EncoderConfig& cfg);

// One linear projection embeds the whole packed patch matrix.
PackedBatch embed_views(Graph& g, const PackedViews& views, const BoundParams& params,
                        const EncoderConfig& cfg);

struct EncoderOutput {
  Tensor pooled;          // n_segments x d, one embedding per view
  Tensor token_features;  // total x d, final-layernorm token states
};

EncoderOutput encode(Graph& g, const PackedBatch& batch, const BoundParams& params,
                     const EncoderConfig& cfg);

// Truncated-normal (std 0.02, clipped at 2 sigma) weights; zero biases;
// unit layernorm scales. Bit-reproducible from the seed.
ParamStore init_params(const EncoderConfig& cfg, std::uint64_t seed);

// Closed-form parameter count for a config; matches init_params' total_size.
std::int64_t param_count(const EncoderConfig& cfg);

// Digest of the shape-relevant encoder configuration; checkpoints embed it so
// a file can only load under a compatible architecture.
std::uint64_t config_digest(const EncoderConfig& cfg);

}  // namespace mmv
