#include "mmv/packing.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "blas.hpp"

namespace mmv {

void validate_boundaries(const std::vector<int>& boundaries, int total_tokens) {
  if (boundaries.size() < 2 || boundaries.front() != 0) {
    fail("boundaries must start at 0 and hold at least one segment");
  }
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (boundaries[i] <= boundaries[i - 1]) {
      fail("boundaries must be strictly increasing, got " + std::to_string(boundaries[i - 1]) +
           " then " + std::to_string(boundaries[i]));
    }
  }
  if (boundaries.back() != total_tokens) {
    fail("last boundary " + std::to_string(boundaries.back()) + " != total token count " +
         std::to_string(total_tokens));
  }
}

void PackedBatch::validate() const {
  if (!tokens.defined() || tokens.rank() != 2) fail("packed tokens must be rank-2");
  validate_boundaries(boundaries, tokens.dim(0));
  if (meta.size() != static_cast<std::size_t>(n_segments())) {
    fail("sample_meta length " + std::to_string(meta.size()) + " != segment count " +
         std::to_string(n_segments()));
  }
  if (coords.size() != static_cast<std::size_t>(tokens.dim(0)) * 3) {
    fail("coords length does not match token count");
  }
}

PackedBatch pack(Graph& g, std::span<const TokenSequence> sequences,
                 std::span<const SampleMeta> meta) {
  if (sequences.empty()) fail("pack: empty sequence list");
  if (!meta.empty() && meta.size() != sequences.size()) {
    fail("pack: meta count does not match sequence count");
  }
  PackedBatch batch;
  batch.boundaries.push_back(0);
  std::vector<Tensor> parts;
  parts.reserve(sequences.size());
  const int d = sequences.front().tokens.rank() == 2 ? sequences.front().tokens.dim(1) : -1;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const TokenSequence& s = sequences[i];
    if (s.tokens.rank() != 2 || s.tokens.dim(1) != d) {
      fail("pack: sequence " + std::to_string(i) + " token width differs, " +
           shape_str(s.tokens.shape()));
    }
    if (s.tokens.dim(0) == 0) fail("pack: sequence " + std::to_string(i) + " has zero tokens");
    parts.push_back(s.tokens);
    batch.boundaries.push_back(batch.boundaries.back() + s.tokens.dim(0));
    batch.coords.insert(batch.coords.end(), s.coords.begin(), s.coords.end());
    SampleMeta m = meta.empty() ? SampleMeta{} : meta[i];
    m.grid = s.grid;
    batch.meta.push_back(m);
  }
  batch.tokens = g.concat_rows(parts);
  batch.validate();
  return batch;
}

std::vector<TokenSequence> unpack(Graph& g, const PackedBatch& batch) {
  batch.validate();
  std::vector<TokenSequence> out;
  out.reserve(static_cast<std::size_t>(batch.n_segments()));
  for (int i = 0; i < batch.n_segments(); ++i) {
    const int b0 = batch.boundaries[static_cast<std::size_t>(i)];
    const int b1 = batch.boundaries[static_cast<std::size_t>(i) + 1];
    TokenSequence seq;
    seq.tokens = g.slice_rows(batch.tokens, b0, b1);
    seq.coords.assign(batch.coords.begin() + static_cast<std::ptrdiff_t>(b0) * 3,
                      batch.coords.begin() + static_cast<std::ptrdiff_t>(b1) * 3);
    seq.grid = batch.meta[static_cast<std::size_t>(i)].grid;
    out.push_back(std::move(seq));
  }
  return out;
}

Tensor packed_attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<int>& boundaries) {
  if (q.shape() != k.shape() || q.shape() != v.shape() || q.rank() != 3) {
    fail("packed_attention: q/k/v must share a [total, heads, head_dim] shape, got " +
         shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const int total = q.dim(0);
  const int heads = q.dim(1);
  const int head_dim = q.dim(2);
  validate_boundaries(boundaries, total);
  const int stride = heads * head_dim;
  const float inv_scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  const int n_seg = static_cast<int>(boundaries.size()) - 1;

  // Softmax probabilities are kept for the backward pass: one S x S block per
  // (segment, head).
  std::size_t probs_total = 0;
  for (int s = 0; s < n_seg; ++s) {
    const std::size_t len = static_cast<std::size_t>(boundaries[s + 1] - boundaries[s]);
    probs_total += len * len * static_cast<std::size_t>(heads);
  }
  auto probs = std::make_shared<std::vector<float>>(probs_total);

  std::vector<float> out(q.values().size(), 0.0f);
  const float* qv = q.values().data();
  const float* kv = k.values().data();
  const float* vv = v.values().data();
  std::size_t probs_off = 0;
  for (int s = 0; s < n_seg; ++s) {
    const int b0 = boundaries[s];
    const int len = boundaries[s + 1] - b0;
    for (int hd = 0; hd < heads; ++hd) {
      const float* qs = qv + static_cast<std::size_t>(b0) * stride + static_cast<std::size_t>(hd) * head_dim;
      const float* ks = kv + static_cast<std::size_t>(b0) * stride + static_cast<std::size_t>(hd) * head_dim;
      const float* vs = vv + static_cast<std::size_t>(b0) * stride + static_cast<std::size_t>(hd) * head_dim;
      float* ps = probs->data() + probs_off;
      // scores = q k^T / sqrt(head_dim)
      detail::sgemm(false, true, len, len, head_dim, qs, stride, ks, stride, 0.0f, ps, len);
      for (int i = 0; i < len; ++i) {
        float* row = ps + static_cast<std::size_t>(i) * len;
        float mx = row[0] * inv_scale;
        for (int j = 0; j < len; ++j) {
          row[j] *= inv_scale;
          mx = std::max(mx, row[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < len; ++j) {
          row[j] = std::exp(row[j] - mx);
          denom += row[j];
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int j = 0; j < len; ++j) row[j] *= inv;
      }
      // out = probs v
      float* os = out.data() + static_cast<std::size_t>(b0) * stride + static_cast<std::size_t>(hd) * head_dim;
      detail::sgemm(false, false, len, head_dim, len, ps, len, vs, stride, 0.0f, os, stride);
      probs_off += static_cast<std::size_t>(len) * len;
    }
  }

  std::vector<int> bounds = boundaries;
  const Tensor inputs[3] = {q, k, v};
  return g.custom_op(
      "packed_attention", q.shape(), std::move(out), inputs,
      [probs, bounds, heads, head_dim, stride, inv_scale](Graph::BackwardCtx& ctx) {
        const bool need_q = ctx.needs_grad(0);
        const bool need_k = ctx.needs_grad(1);
        const bool need_v = ctx.needs_grad(2);
        if (!need_q && !need_k && !need_v) return;
        const float* go = ctx.out_grad().data();
        const float* qv = ctx.in_value(0).data();
        const float* kv = ctx.in_value(1).data();
        const float* vv = ctx.in_value(2).data();
        float* gq = need_q ? ctx.in_grad(0).data() : nullptr;
        float* gk = need_k ? ctx.in_grad(1).data() : nullptr;
        float* gv = need_v ? ctx.in_grad(2).data() : nullptr;
        const int n_seg = static_cast<int>(bounds.size()) - 1;
        std::size_t probs_off = 0;
        std::vector<float> dp;  // grad of probs, then grad of scores, reused per block
        for (int s = 0; s < n_seg; ++s) {
          const int b0 = bounds[s];
          const int len = bounds[s + 1] - b0;
          for (int hd = 0; hd < heads; ++hd) {
            const std::size_t off = static_cast<std::size_t>(b0) * stride +
                                    static_cast<std::size_t>(hd) * head_dim;
            const float* ps = probs->data() + probs_off;
            const float* gos = go + off;
            dp.assign(static_cast<std::size_t>(len) * len, 0.0f);
            if (need_v) {
              // gv += probs^T * gout
              detail::sgemm(true, false, len, head_dim, len, ps, len, gos, stride, 1.0f, gv + off,
                            stride);
            }
            if (need_q || need_k) {
              // dprobs = gout * v^T, then softmax pullback rowwise into dscores
              detail::sgemm(false, true, len, len, head_dim, gos, stride, vv + off, stride, 0.0f,
                            dp.data(), len);
              for (int i = 0; i < len; ++i) {
                float* row = dp.data() + static_cast<std::size_t>(i) * len;
                const float* prow = ps + static_cast<std::size_t>(i) * len;
                double dot = 0.0;
                for (int j = 0; j < len; ++j) dot += static_cast<double>(row[j]) * prow[j];
                for (int j = 0; j < len; ++j) {
                  row[j] = prow[j] * (row[j] - static_cast<float>(dot)) * inv_scale;
                }
              }
              if (need_q) {
                detail::sgemm(false, false, len, head_dim, len, dp.data(), len, kv + off, stride,
                              1.0f, gq + off, stride);
              }
              if (need_k) {
                detail::sgemm(true, false, len, head_dim, len, dp.data(), len, qv + off, stride,
                              1.0f, gk + off, stride);
              }
            }
            probs_off += static_cast<std::size_t>(len) * len;
          }
        }
      });
}

Tensor segment_mean_pool(Graph& g, const Tensor& tokens, const std::vector<int>& boundaries) {
  if (tokens.rank() != 2) fail("segment_mean_pool: tokens must be rank-2");
  validate_boundaries(boundaries, tokens.dim(0));
  const int d = tokens.dim(1);
  const int n_seg = static_cast<int>(boundaries.size()) - 1;
  std::vector<float> out(static_cast<std::size_t>(n_seg) * d);
  const float* tv = tokens.values().data();
  for (int s = 0; s < n_seg; ++s) {
    const int b0 = boundaries[s];
    const int len = boundaries[s + 1] - b0;
    for (int c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int r = 0; r < len; ++r) acc += tv[static_cast<std::size_t>(b0 + r) * d + c];
      out[static_cast<std::size_t>(s) * d + c] = static_cast<float>(acc / len);
    }
  }
  std::vector<int> bounds = boundaries;
  return g.custom_op("segment_mean_pool", {n_seg, d}, std::move(out),
                     std::span<const Tensor>(&tokens, 1), [bounds, d](Graph::BackwardCtx& ctx) {
                       if (!ctx.needs_grad(0)) return;
                       auto go = ctx.out_grad();
                       auto gi = ctx.in_grad(0);
                       const int n_seg = static_cast<int>(bounds.size()) - 1;
                       for (int s = 0; s < n_seg; ++s) {
                         const int b0 = bounds[s];
                         const int len = bounds[s + 1] - b0;
                         const float inv = 1.0f / static_cast<float>(len);
                         for (int r = 0; r < len; ++r) {
                           for (int c = 0; c < d; ++c) {
                             gi[static_cast<std::size_t>(b0 + r) * d + c] +=
                                 go[static_cast<std::size_t>(s) * d + c] * inv;
                           }
                         }
                       }
                     });
}

Tensor padded_attention_reference(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                                  const std::vector<int>& boundaries) {
  if (q.shape() != k.shape() || q.shape() != v.shape() || q.rank() != 3) {
    fail("padded_attention_reference: q/k/v must share a [total, heads, head_dim] shape");
  }
  if (q.requires_grad() || k.requires_grad() || v.requires_grad()) {
    fail("padded_attention_reference is forward-only");
  }
  const int total = q.dim(0);
  const int heads = q.dim(1);
  const int head_dim = q.dim(2);
  validate_boundaries(boundaries, total);
  const int n_seg = static_cast<int>(boundaries.size()) - 1;
  const int stride = heads * head_dim;
  int max_len = 0;
  for (int s = 0; s < n_seg; ++s) max_len = std::max(max_len, boundaries[s + 1] - boundaries[s]);
  const float inv_scale = 1.0f / std::sqrt(static_cast<float>(head_dim));

  std::vector<float> out(q.values().size(), 0.0f);
  std::vector<float> qp(static_cast<std::size_t>(max_len) * head_dim);
  std::vector<float> kp(qp.size()), vp(qp.size());
  std::vector<float> scores(static_cast<std::size_t>(max_len) * max_len);
  std::vector<float> op(qp.size());
  const float* qv = q.values().data();
  const float* kv = k.values().data();
  const float* vv = v.values().data();
  for (int s = 0; s < n_seg; ++s) {
    const int b0 = boundaries[s];
    const int len = boundaries[s + 1] - b0;
    for (int hd = 0; hd < heads; ++hd) {
      std::fill(qp.begin(), qp.end(), 0.0f);
      std::fill(kp.begin(), kp.end(), 0.0f);
      std::fill(vp.begin(), vp.end(), 0.0f);
      for (int r = 0; r < len; ++r) {
        const std::size_t src = static_cast<std::size_t>(b0 + r) * stride +
                                static_cast<std::size_t>(hd) * head_dim;
        std::copy_n(qv + src, head_dim, qp.begin() + static_cast<std::ptrdiff_t>(r) * head_dim);
        std::copy_n(kv + src, head_dim, kp.begin() + static_cast<std::ptrdiff_t>(r) * head_dim);
        std::copy_n(vv + src, head_dim, vp.begin() + static_cast<std::ptrdiff_t>(r) * head_dim);
      }
      // Full max_len x max_len attention; padded key columns are masked out.
      detail::sgemm(false, true, max_len, max_len, head_dim, qp.data(), head_dim, kp.data(),
                    head_dim, 0.0f, scores.data(), max_len);
      for (int i = 0; i < max_len; ++i) {
        float* row = scores.data() + static_cast<std::size_t>(i) * max_len;
        float mx = -std::numeric_limits<float>::infinity();
        for (int j = 0; j < len; ++j) {
          row[j] *= inv_scale;
          mx = std::max(mx, row[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < len; ++j) {
          row[j] = std::exp(row[j] - mx);
          denom += row[j];
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int j = 0; j < len; ++j) row[j] *= inv;
        for (int j = len; j < max_len; ++j) row[j] = 0.0f;
      }
      detail::sgemm(false, false, max_len, head_dim, max_len, scores.data(), max_len, vp.data(),
                    head_dim, 0.0f, op.data(), head_dim);
      for (int r = 0; r < len; ++r) {
        const std::size_t dst = static_cast<std::size_t>(b0 + r) * stride +
                                static_cast<std::size_t>(hd) * head_dim;
        std::copy_n(op.begin() + static_cast<std::ptrdiff_t>(r) * head_dim, head_dim,
                    out.begin() + static_cast<std::ptrdiff_t>(dst));
      }
    }
  }
  const Tensor inputs[3] = {q, k, v};
  return g.custom_op("padded_attention_reference", q.shape(), std::move(out), inputs,
                     Graph::BackwardFn{});
}

double padding_overhead(std::span<const int> lengths) {
  if (lengths.empty()) fail("padding_overhead: empty length list");
  std::int64_t sum = 0;
  int mx = 0;
  for (int l : lengths) {
    if (l <= 0) fail("padding_overhead: non-positive length");
    sum += l;
    mx = std::max(mx, l);
  }
  return static_cast<double>(lengths.size()) * mx / static_cast<double>(sum);
}

}  // namespace mmv
