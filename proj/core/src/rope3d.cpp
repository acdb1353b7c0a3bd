#include "mmv/rope3d.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace mmv {

RopeTable build_rope_table(int head_dim, float base) {
  if (head_dim <= 0 || head_dim % 6 != 0) {
    fail("rope head_dim must be a positive multiple of 6 (three axes with paired components), got " +
         std::to_string(head_dim));
  }
  if (base <= 0.0f) fail("rope base must be positive");
  RopeTable table;
  table.head_dim = head_dim;
  table.base = base;
  const int per_axis = head_dim / 3;  // frequency-exponent denominator
  const int pairs = head_dim / 6;
  table.freqs.resize(static_cast<std::size_t>(pairs));
  for (int j = 0; j < pairs; ++j) {
    table.freqs[static_cast<std::size_t>(j)] =
        std::pow(base, -2.0f * static_cast<float>(j) / static_cast<float>(per_axis));
  }
  return table;
}

namespace {

// cos/sin per (token, axis, pair), laid out token-major.
struct Rotations {
  std::vector<float> cosines;
  std::vector<float> sines;
};

Rotations make_rotations(const std::vector<float>& coords, std::size_t tokens,
                         const RopeTable& table) {
  const std::size_t pairs = table.freqs.size();
  Rotations rot;
  rot.cosines.resize(tokens * 3 * pairs);
  rot.sines.resize(tokens * 3 * pairs);
  std::size_t k = 0;
  for (std::size_t t = 0; t < tokens; ++t) {
    for (int axis = 0; axis < 3; ++axis) {
      const float c = coords[t * 3 + static_cast<std::size_t>(axis)];
      for (std::size_t j = 0; j < pairs; ++j, ++k) {
        const float angle = c * table.freqs[j];
        rot.cosines[k] = std::cos(angle);
        rot.sines[k] = std::sin(angle);
      }
    }
  }
  return rot;
}

// Rotate (or counter-rotate) every axis pair of every head in place.
void rotate(std::span<const float> in, std::span<float> out, std::size_t tokens, int heads,
            int head_dim, const Rotations& rot, bool inverse) {
  const std::size_t pairs = static_cast<std::size_t>(head_dim) / 6;
  const std::size_t block = static_cast<std::size_t>(head_dim) / 3;
  for (std::size_t t = 0; t < tokens; ++t) {
    const float* rc = rot.cosines.data() + t * 3 * pairs;
    const float* rs = rot.sines.data() + t * 3 * pairs;
    for (int hd = 0; hd < heads; ++hd) {
      const std::size_t base = (t * static_cast<std::size_t>(heads) + static_cast<std::size_t>(hd)) *
                               static_cast<std::size_t>(head_dim);
      for (int axis = 0; axis < 3; ++axis) {
        for (std::size_t j = 0; j < pairs; ++j) {
          const float c = rc[static_cast<std::size_t>(axis) * pairs + j];
          const float s0 = rs[static_cast<std::size_t>(axis) * pairs + j];
          const float s = inverse ? -s0 : s0;
          const std::size_t i0 = base + static_cast<std::size_t>(axis) * block + 2 * j;
          const float x = in[i0];
          const float y = in[i0 + 1];
          out[i0] = x * c - y * s;
          out[i0 + 1] = x * s + y * c;
        }
      }
    }
  }
}

}  // namespace

Tensor apply_rope(Graph& g, const Tensor& vectors, const std::vector<float>& coords,
                  const RopeTable& table) {
  if (vectors.rank() != 3 || vectors.dim(2) != table.head_dim) {
    fail("apply_rope: expected [S, n_heads, head_dim=" + std::to_string(table.head_dim) +
         "], got " + shape_str(vectors.shape()));
  }
  const std::size_t tokens = static_cast<std::size_t>(vectors.dim(0));
  const int heads = vectors.dim(1);
  if (coords.size() != tokens * 3) {
    fail("apply_rope: coords length " + std::to_string(coords.size()) + " != 3 * " +
         std::to_string(tokens));
  }
  auto rot = std::make_shared<Rotations>(make_rotations(coords, tokens, table));
  std::vector<float> out(vectors.values().size());
  rotate(vectors.values(), out, tokens, heads, table.head_dim, *rot, false);
  const int head_dim = table.head_dim;
  return g.custom_op(
      "apply_rope", vectors.shape(), std::move(out), std::span<const Tensor>(&vectors, 1),
      [rot, tokens, heads, head_dim](Graph::BackwardCtx& ctx) {
        if (!ctx.needs_grad(0)) return;
        // The rotation is orthogonal: the pullback is the inverse rotation.
        std::vector<float> tmp(ctx.out_grad().size());
        rotate(ctx.out_grad(), tmp, tokens, heads, head_dim, *rot, true);
        auto gi = ctx.in_grad(0);
        for (std::size_t i = 0; i < tmp.size(); ++i) gi[i] += tmp[i];
      });
}

}  // namespace mmv
