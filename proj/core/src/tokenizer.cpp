#include "mmv/tokenizer.hpp"

#include <string>

namespace mmv {

const char* modality_name(Modality m) { return m == Modality::xray2d ? "xray2d" : "ct3d"; }

void Volume::validate() const {
  if (c <= 0 || z <= 0 || h <= 0 || w <= 0) {
    fail("volume has non-positive dims C=" + std::to_string(c) + " Z=" + std::to_string(z) +
         " H=" + std::to_string(h) + " W=" + std::to_string(w));
  }
  if (static_cast<std::int64_t>(data.size()) != voxels()) {
    fail("volume data length " + std::to_string(data.size()) + " does not match C*Z*H*W = " +
         std::to_string(voxels()));
  }
  if (!all_finite(data)) fail("volume contains non-finite values");
}

Volume promote_to_pseudo_volume(const Volume& image, int patch) {
  image.validate();
  if (image.modality != Modality::xray2d) {
    fail("pseudo-volume promotion applies to xray2d inputs, got ct3d");
  }
  if (image.z != 1) {
    fail("pseudo-volume promotion requires Z = 1, got Z = " + std::to_string(image.z));
  }
  if (patch < 1) fail("patch size must be >= 1");
  Volume out;
  out.c = image.c;
  out.z = patch;
  out.h = image.h;
  out.w = image.w;
  out.modality = image.modality;
  out.native_lo = image.native_lo;
  out.native_hi = image.native_hi;
  out.data.assign(static_cast<std::size_t>(out.voxels()), 0.0f);
  for (int ci = 0; ci < image.c; ++ci) {
    for (int hi = 0; hi < image.h; ++hi) {
      for (int wi = 0; wi < image.w; ++wi) {
        out.at(ci, 0, hi, wi) = image.at(ci, 0, hi, wi);
      }
    }
  }
  return out;
}

PatchSequence patchify(const Volume& volume, int patch, float alpha) {
  volume.validate();
  if (patch < 1) fail("patch size must be >= 1");
  if (volume.z % patch || volume.h % patch || volume.w % patch) {
    fail("volume dims Z=" + std::to_string(volume.z) + " H=" + std::to_string(volume.h) +
         " W=" + std::to_string(volume.w) + " are not divisible by P=" + std::to_string(patch) +
         " (would need padding of " + std::to_string((patch - volume.z % patch) % patch) + "," +
         std::to_string((patch - volume.h % patch) % patch) + "," +
         std::to_string((patch - volume.w % patch) % patch) + ")");
  }
  PatchSequence seq;
  seq.grid = GridShape{volume.z / patch, volume.h / patch, volume.w / patch};
  seq.patch_dim = volume.c * patch * patch * patch;
  const std::int64_t count = seq.grid.count();
  seq.patches.resize(static_cast<std::size_t>(count) * seq.patch_dim);
  std::size_t out = 0;
  for (int gz = 0; gz < seq.grid.z; ++gz) {
    for (int gh = 0; gh < seq.grid.h; ++gh) {
      for (int gw = 0; gw < seq.grid.w; ++gw) {
        for (int ci = 0; ci < volume.c; ++ci) {
          for (int dz = 0; dz < patch; ++dz) {
            for (int dh = 0; dh < patch; ++dh) {
              for (int dw = 0; dw < patch; ++dw) {
                seq.patches[out++] =
                    volume.at(ci, gz * patch + dz, gh * patch + dh, gw * patch + dw);
              }
            }
          }
        }
      }
    }
  }
  seq.coords = grid_coords(seq.grid, alpha);
  return seq;
}

Volume un_patchify(const PatchSequence& seq, int patch, int channels) {
  Volume out;
  out.c = channels;
  out.z = seq.grid.z * patch;
  out.h = seq.grid.h * patch;
  out.w = seq.grid.w * patch;
  out.data.assign(static_cast<std::size_t>(out.voxels()), 0.0f);
  if (seq.patch_dim != channels * patch * patch * patch) {
    fail("un_patchify: patch_dim " + std::to_string(seq.patch_dim) + " does not match C*P^3");
  }
  std::size_t in = 0;
  for (int gz = 0; gz < seq.grid.z; ++gz) {
    for (int gh = 0; gh < seq.grid.h; ++gh) {
      for (int gw = 0; gw < seq.grid.w; ++gw) {
        for (int ci = 0; ci < channels; ++ci) {
          for (int dz = 0; dz < patch; ++dz) {
            for (int dh = 0; dh < patch; ++dh) {
              for (int dw = 0; dw < patch; ++dw) {
                out.at(ci, gz * patch + dz, gh * patch + dh, gw * patch + dw) =
                    seq.patches[in++];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<float> grid_coords(const GridShape& grid, float alpha) {
  if (grid.z < 1 || grid.h < 1 || grid.w < 1) fail("grid sizes must be >= 1");
  std::vector<float> coords;
  coords.reserve(static_cast<std::size_t>(grid.count()) * 3);
  auto axis_coord = [alpha](int i, int g) {
    return alpha * static_cast<float>(i) / static_cast<float>(std::max(g - 1, 1));
  };
  for (int gz = 0; gz < grid.z; ++gz) {
    for (int gh = 0; gh < grid.h; ++gh) {
      for (int gw = 0; gw < grid.w; ++gw) {
        coords.push_back(axis_coord(gz, grid.z));
        coords.push_back(axis_coord(gh, grid.h));
        coords.push_back(axis_coord(gw, grid.w));
      }
    }
  }
  return coords;
}

Tensor embed_patches(Graph& g, const Tensor& patches, const Tensor& projection,
                     const Tensor& bias) {
  if (patches.rank() != 2 || projection.rank() != 2 || patches.dim(1) != projection.dim(0) ||
      bias.size() != projection.dim(1)) {
    fail("embed_patches: shapes " + shape_str(patches.shape()) + " x " +
         shape_str(projection.shape()) + " + " + shape_str(bias.shape()) + " do not conform");
  }
  return g.add(g.matmul(patches, projection), bias);
}

TokenSequence tokenize_view(Graph& g, const Volume& view, int patch, float alpha,
                            const Tensor& projection, const Tensor& bias) {
  const Volume* vol = &view;
  Volume promoted;
  if (view.modality == Modality::xray2d && view.z == 1) {
    promoted = promote_to_pseudo_volume(view, patch);
    vol = &promoted;
  }
  PatchSequence seq = patchify(*vol, patch, alpha);
  TokenSequence out;
  Tensor raw = g.constant({static_cast<int>(seq.grid.count()), seq.patch_dim}, seq.patches);
  out.tokens = embed_patches(g, raw, projection, bias);
  out.coords = std::move(seq.coords);
  out.grid = seq.grid;
  return out;
}

}  // namespace mmv
