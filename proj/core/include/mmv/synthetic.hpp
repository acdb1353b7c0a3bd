// Deterministic synthetic samples with planted geometric findings.
//
// Five binary labels, each tied to a structure whose 2D and 3D realizations
// agree in the image plane:
//   0 disk   - bright ellipse / ellipsoid near the center
//   1 band   - bright full-width horizontal band / slab
//   2 blobs  - cluster of small bright spots in the upper-left region
//   3 wedge  - intensity ramp widening toward the right edge
//   4 cap    - quarter-disc / quarter-cylinder at a bottom corner
// Structure geometry is drawn from a stream keyed by (seed, index, label) but
// not by modality, so 2D and 3D datasets generated from one seed plant their
// findings at corresponding in-plane positions. Backgrounds are smooth
// low-frequency noise plus light texture, keyed per modality.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mmv/tokenizer.hpp"

namespace mmv {

inline constexpr int kNumLabels = 5;
inline constexpr std::array<const char*, kNumLabels> kLabelNames{"disk", "band", "blobs", "wedge",
                                                                 "cap"};

struct SyntheticSample {
  Volume volume;  // native intensities, not yet normalized
  std::array<bool, kNumLabels> labels{};
  std::int64_t id = 0;
  std::vector<std::uint8_t> structure_mask;  // per voxel, only when requested

  std::uint8_t label_bits() const {
    std::uint8_t bits = 0;
    for (int i = 0; i < kNumLabels; ++i) bits |= labels[static_cast<std::size_t>(i)] << i;
    return bits;
  }
};

struct SyntheticConfig {
  int size_2d = 224;     // H = W of 2D images
  int size_3d = 112;     // Z = H = W of 3D volumes
  float label_rate = 0.4f;
  bool shifted_background = false;  // alternate background statistics (domain shift)
  bool with_masks = false;          // emit per-voxel structure masks
};

std::vector<SyntheticSample> gen_synthetic(std::uint64_t seed, Modality modality, int n,
                                           const SyntheticConfig& cfg = {});

// Single sample at a given index of the virtual dataset (streaming access).
SyntheticSample gen_synthetic_sample(std::uint64_t seed, Modality modality, std::int64_t index,
                                     const SyntheticConfig& cfg = {});

}  // namespace mmv
