// File formats: MMV-RAW samples, dataset manifests, portable graymaps, and
// atomic file writes. All multi-byte fields are little-endian.
//
// MMV-RAW layout:
//   magic "MMV1" | u8 modality (0 xray2d, 1 ct3d) | u8 label bitmask |
//   u32 C | u32 Z | u32 H | u32 W | f32 x (C*Z*H*W) | u32 CRC-32
// The checksum covers the payload: every byte after the magic and before the
// checksum itself.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmv/synthetic.hpp"
#include "mmv/tokenizer.hpp"

namespace mmv {

// Write-temp-then-rename; the destination is never observed half-written.
void atomic_write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
void atomic_write_text(const std::string& path, const std::string& text);

struct RawSample {
  Volume volume;
  std::uint8_t label_bits = 0;
};

void write_mmv_raw(const std::string& path, const Volume& volume, std::uint8_t label_bits);
RawSample read_mmv_raw(const std::string& path);

struct ManifestEntry {
  std::int64_t id = 0;
  std::string file;
  Modality modality = Modality::xray2d;
  std::array<bool, kNumLabels> labels{};
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

// Binary 8-bit P5 graymap of values already scaled to [0, 1].
void write_pgm(const std::string& path, const std::vector<float>& values01, int h, int w);

}  // namespace mmv
