// 3D rotary positional embedding over normalized (z,h,w) coordinates.
//
// The head dimension splits into three equal blocks, one per spatial axis.
// Within an axis block the components pair up as (2j, 2j+1); pair j rotates by
// angle coord[axis] * freq[j] with freq[j] = base^(-2j / (head_dim/3)), the
// standard 1D rotary schedule restricted to the axis's block. Rotations are
// orthogonal, so token norms are preserved and q.k depends only on coordinate
// differences per axis.
#pragma once

#include <vector>

#include "mmv/graph.hpp"

namespace mmv {

struct RopeTable {
  int head_dim = 0;
  float base = 10000.0f;
  std::vector<float> freqs;  // length head_dim/6, shared by all three axes
};

// head_dim must divide by 6 (three axes x component pairs).
RopeTable build_rope_table(int head_dim, float base = 10000.0f);

// vectors: [S, n_heads, head_dim]; coords: S x 3 flat array. Differentiable
// w.r.t. vectors; coordinates are data.
Tensor apply_rope(Graph& g, const Tensor& vectors, const std::vector<float>& coords,
                  const RopeTable& table);

}  // namespace mmv
