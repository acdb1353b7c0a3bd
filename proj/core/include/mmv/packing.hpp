// Variable-length sequence packing with exact per-sample attention.
//
// Token sequences from many views concatenate into one continuous sequence;
// boundary offsets delineate the segments. packed_attention computes dense
// softmax(q k^T / sqrt(head_dim)) v independently inside each segment, which
// is the mathematical contract of a variable-length fused attention kernel:
// no token ever attends across a boundary.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmv/graph.hpp"
#include "mmv/tokenizer.hpp"

namespace mmv {

struct SampleMeta {
  std::int64_t sample_id = 0;
  Modality modality = Modality::xray2d;
  GridShape grid;
  bool global_view = true;
  int view_index = 0;
};

struct PackedBatch {
  Tensor tokens;               // (sum S_i) x d
  std::vector<int> boundaries;  // [0, S_1, S_1+S_2, ...], strictly increasing
  std::vector<float> coords;    // (sum S_i) x 3
  std::vector<SampleMeta> meta; // one per segment

  int n_segments() const { return static_cast<int>(boundaries.size()) - 1; }
  int total_tokens() const { return boundaries.empty() ? 0 : boundaries.back(); }
  void validate() const;
};

// Concatenate sequences in input order; boundaries are prefix sums of lengths.
PackedBatch pack(Graph& g, std::span<const TokenSequence> sequences,
                 std::span<const SampleMeta> meta);

// Inverse of pack; round-trips bit-exactly.
std::vector<TokenSequence> unpack(Graph& g, const PackedBatch& batch);

// Per-segment attention. q, k, v: [total, n_heads, head_dim]. Differentiable
// w.r.t. all three.
Tensor packed_attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<int>& boundaries);

// Mean over each segment's rows: [total, d] -> [n_segments, d].
Tensor segment_mean_pool(Graph& g, const Tensor& tokens, const std::vector<int>& boundaries);

// Token-count inflation a pad-to-max batch layout would cost: n * max / sum.
double padding_overhead(std::span<const int> lengths);

// Pad-to-max reference: identical outputs computed at the padded layout's
// cost (every segment attends over max-length buffers with masked tails).
// Forward-only; it exists to verify and benchmark against packed_attention.
Tensor padded_attention_reference(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                                  const std::vector<int>& boundaries);

void validate_boundaries(const std::vector<int>& boundaries, int total_tokens);

}  // namespace mmv
