// Multi-crop view generation and intensity normalization.
//
// Crops are drawn in the input's native plane (2D images stay depth-1 until
// pseudo-volume promotion). A view draws its area/volume fraction s uniformly
// from the role's scale range, scales every axis isotropically (sqrt(s) in 2D,
// cbrt(s) in 3D), places the crop uniformly at random, then shrinks each
// extent symmetrically about the crop center down to the nearest multiple of
// P (minimum P) so patchification stays exact. A degenerate [1,1] scale range
// therefore yields the maximal P-multiple central region.
#pragma once

#include <cstdint>
#include <vector>

#include "mmv/tokenizer.hpp"

namespace mmv {

struct ViewConfig {
  int n_global = 2;
  int n_local = 8;
  float global_scale_lo = 0.3f, global_scale_hi = 1.0f;
  float local_scale_lo = 0.05f, local_scale_hi = 0.3f;
  int long_side_2d = 224;
  int long_side_3d = 112;
  int patch = 14;

  int n_views() const { return n_global + n_local; }
  void validate() const;
};

struct ViewSet {
  std::vector<Volume> views;  // n_global global views first, then locals
  std::vector<bool> is_global;
  std::int64_t sample_id = 0;
};

// Min-max scaling to [-1, 1]; a constant image maps to zeros.
Volume normalize_xray(const Volume& image);

// Clamp to the window [level - width/2, level + width/2], then map to [-1, 1].
Volume normalize_ct(const Volume& volume, float width = 2500.0f, float level = 250.0f);

// Scale the longest spatial axis to target, other axes by the same factor,
// bilinear (2D) / trilinear (3D), aspect preserved. No-op when already there.
// Rejects results whose croppable axes fall below min_axis (pass the patch
// size when the output feeds the crop pipeline).
Volume downsize_long_side(const Volume& v, int target, int min_axis = 1);

// The full image's maximal P-multiple central region (the deterministic view
// used for frozen-feature evaluation).
Volume center_view(const Volume& v, int patch);

// n_global + n_local random crops; bit-reproducible from the seed.
ViewSet sample_views(const Volume& v, const ViewConfig& cfg, std::uint64_t rng_seed);

}  // namespace mmv
