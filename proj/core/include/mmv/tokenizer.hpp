// 2D/3D inputs to patch-token sequences in a shared 3D coordinate space.
//
// 2D images ride along as single-slice volumes: they are promoted to a
// pseudo-volume of depth P (image at slice 0, zeros above), cubic-patchified
// into a depth-1 grid, and keep depth coordinate 0. Coordinates along an axis
// of grid size g are alpha * i / max(g - 1, 1), so every axis spans [0, alpha]
// regardless of resolution.
#pragma once

#include <cstdint>
#include <vector>

#include "mmv/graph.hpp"
#include "mmv/tensor.hpp"

namespace mmv {

enum class Modality : std::uint8_t { xray2d = 0, ct3d = 1 };

const char* modality_name(Modality m);

// Channel-first dense volume, C x Z x H x W row-major. Z == 1 for native 2D.
struct Volume {
  int c = 1, z = 1, h = 0, w = 0;
  Modality modality = Modality::xray2d;
  std::vector<float> data;
  float native_lo = 0.0f, native_hi = 1.0f;  // declared native intensity range

  std::int64_t voxels() const {
    return static_cast<std::int64_t>(c) * z * h * w;
  }
  std::size_t index(int ci, int zi, int hi, int wi) const {
    return ((static_cast<std::size_t>(ci) * z + zi) * h + hi) * w + wi;
  }
  float at(int ci, int zi, int hi, int wi) const { return data[index(ci, zi, hi, wi)]; }
  float& at(int ci, int zi, int hi, int wi) { return data[index(ci, zi, hi, wi)]; }

  void validate() const;  // dims positive, data length matches, values finite
};

struct GridShape {
  int z = 1, h = 1, w = 1;
  std::int64_t count() const { return static_cast<std::int64_t>(z) * h * w; }
  bool operator==(const GridShape&) const = default;
};

// Embedded tokens of one view plus their normalized coordinates.
struct TokenSequence {
  Tensor tokens;              // S x d
  std::vector<float> coords;  // S x 3, (z,h,w) per token, each in [0, alpha]
  GridShape grid;
};

// Raw flattened patches of one view, before the linear projection.
struct PatchSequence {
  std::vector<float> patches;  // S x (C * P^3), channel-first then z,h,w within the cube
  std::vector<float> coords;   // S x 3
  GridShape grid;
  int patch_dim = 0;
};

// Zero-pad a depth-1 2D image to depth P; the image occupies slice z = 0.
Volume promote_to_pseudo_volume(const Volume& image, int patch);

// Non-overlapping cubic patches. Z, H, W must each divide by patch; the grid
// is (Z/P, H/P, W/P) in row-major (z,h,w) patch order.
PatchSequence patchify(const Volume& volume, int patch, float alpha);

// Exact inverse of patchify (modality and native range of the caller's choosing).
Volume un_patchify(const PatchSequence& seq, int patch, int channels);

// Coordinates for every patch of a grid: alpha * i / max(g - 1, 1) per axis.
std::vector<float> grid_coords(const GridShape& grid, float alpha);

// tokens = patches * projection + bias, recorded on the graph.
Tensor embed_patches(Graph& g, const Tensor& patches, const Tensor& projection, const Tensor& bias);

// Full per-view pipeline: promote (2D), patchify, coords, embed.
TokenSequence tokenize_view(Graph& g, const Volume& view, int patch, float alpha,
                            const Tensor& projection, const Tensor& bias);

}  // namespace mmv
