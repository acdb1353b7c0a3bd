#include "mmv/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "mmv/rng.hpp"

namespace mmv {

namespace {

struct BackgroundProfile {
  float base;
  float amplitude;
  std::array<float, 3> octave_weights;
  float texture_sigma;
};

BackgroundProfile background_profile(Modality m, bool shifted) {
  if (m == Modality::xray2d) {
    if (shifted) return {570.0f, 200.0f, {1.2f, 0.2f, 0.5f}, 32.0f};
    return {450.0f, 250.0f, {0.55f, 0.5f, 0.35f}, 18.0f};
  }
  if (shifted) return {-100.0f, 200.0f, {1.2f, 0.2f, 0.5f}, 55.0f};
  return {-280.0f, 250.0f, {0.8f, 0.55f, 0.35f}, 30.0f};
}

// Value-noise octave: a low-resolution grid of uniforms, lerped up to size.
class NoiseOctave {
 public:
  NoiseOctave(Rng& rng, int nodes, bool planar)
      : nodes_(nodes), planar_(planar),
        grid_(static_cast<std::size_t>(planar ? nodes * nodes : nodes * nodes * nodes)) {
    for (auto& v : grid_) v = rng.uniform(-1.0f, 1.0f);
  }

  float at(float uz, float uh, float uw) const {
    if (planar_) return sample2d(uh, uw);
    return sample3d(uz, uh, uw);
  }

 private:
  float node(int z, int h, int w) const {
    if (planar_) return grid_[static_cast<std::size_t>(h) * nodes_ + w];
    return grid_[(static_cast<std::size_t>(z) * nodes_ + h) * nodes_ + w];
  }
  static void split(float u, int nodes, int& i0, float& t) {
    float x = u * static_cast<float>(nodes - 1);
    i0 = std::min(static_cast<int>(x), nodes - 2);
    t = x - static_cast<float>(i0);
  }
  float sample2d(float uh, float uw) const {
    int h0, w0;
    float th, tw;
    split(uh, nodes_, h0, th);
    split(uw, nodes_, w0, tw);
    float a = node(0, h0, w0) + (node(0, h0, w0 + 1) - node(0, h0, w0)) * tw;
    float b = node(0, h0 + 1, w0) + (node(0, h0 + 1, w0 + 1) - node(0, h0 + 1, w0)) * tw;
    return a + (b - a) * th;
  }
  float sample3d(float uz, float uh, float uw) const {
    int z0, h0, w0;
    float tz, th, tw;
    split(uz, nodes_, z0, tz);
    split(uh, nodes_, h0, th);
    split(uw, nodes_, w0, tw);
    auto plane = [&](int z) {
      float a = node(z, h0, w0) + (node(z, h0, w0 + 1) - node(z, h0, w0)) * tw;
      float b = node(z, h0 + 1, w0) + (node(z, h0 + 1, w0 + 1) - node(z, h0 + 1, w0)) * tw;
      return a + (b - a) * th;
    };
    float p0 = plane(z0);
    return p0 + (plane(z0 + 1) - p0) * tz;
  }

  int nodes_;
  bool planar_;
  std::vector<float> grid_;
};

float smoothstep01(float x) {
  x = std::clamp(x, 0.0f, 1.0f);
  return x * x * (3.0f - 2.0f * x);
}

// One planted structure, described in normalized (z,h,w) coordinates in [0,1].
struct Structure {
  int label = 0;
  float cz = 0.5f, ch = 0.5f, cw = 0.5f;  // centers
  float az = 0.2f, ah = 0.2f, aw = 0.2f;  // half-extents / radii
  float amplitude = 0.0f;
  float aux = 0.0f;  // corner selector (cap)
  std::array<std::array<float, 3>, 8> points{};  // blob centers (label 2)
  int n_points = 0;
};

// Geometry streams are keyed by (seed, index, label) only, never by modality,
// so paired 2D/3D datasets plant findings at the same in-plane positions.
Structure draw_structure(std::uint64_t seed, std::int64_t index, int label, float amplitude) {
  Rng rng = Rng::derive(seed, "structure", static_cast<std::uint64_t>(index),
                        static_cast<std::uint64_t>(label));
  Structure s;
  s.label = label;
  s.amplitude = amplitude;
  switch (label) {
    case 0:  // disk: compact ellipse near the center
      s.ch = rng.uniform(0.45f, 0.55f);
      s.cw = rng.uniform(0.45f, 0.55f);
      s.cz = rng.uniform(0.45f, 0.55f);
      s.ah = rng.uniform(0.14f, 0.20f);
      s.aw = rng.uniform(0.14f, 0.20f);
      s.az = rng.uniform(0.14f, 0.20f);
      break;
    case 1:  // band: full-width slab at some height
      s.ch = rng.uniform(0.30f, 0.70f);
      s.ah = rng.uniform(0.05f, 0.08f);
      break;
    case 2: {  // blobs: 5..8 small spots in the upper-left strip
      s.n_points = 5 + static_cast<int>(rng.uniform_int(4));
      for (int i = 0; i < s.n_points; ++i) {
        s.points[static_cast<std::size_t>(i)] = {rng.uniform(0.25f, 0.75f),
                                                 rng.uniform(0.04f, 0.13f),
                                                 rng.uniform(0.06f, 0.44f)};
      }
      s.ah = rng.uniform(0.030f, 0.048f);  // blob radius
      break;
    }
    case 3:  // wedge: ramp toward the right edge
      s.ch = rng.uniform(0.38f, 0.62f);
      s.ah = rng.uniform(0.13f, 0.18f);  // half-height at the edge
      break;
    case 4:  // cap: quarter-disc at a bottom corner
      s.aux = rng.next_float() < 0.5f ? 0.0f : 1.0f;  // 0 = bottom-left, 1 = bottom-right
      s.ah = rng.uniform(0.15f, 0.22f);
      break;
    default:
      fail("unknown label index");
  }
  return s;
}

// Additive contribution of a structure at normalized coordinates.
float structure_value(const Structure& s, float uz, float uh, float uw, bool planar) {
  const float feather = 0.18f;
  switch (s.label) {
    case 0: {
      float dz = planar ? 0.0f : (uz - s.cz) / s.az;
      float dh = (uh - s.ch) / s.ah;
      float dw = (uw - s.cw) / s.aw;
      float r = std::sqrt(dz * dz + dh * dh + dw * dw);
      return s.amplitude * smoothstep01((1.0f - r) / feather);
    }
    case 1: {
      float r = std::fabs(uh - s.ch) / s.ah;
      return s.amplitude * smoothstep01((1.0f - r) / feather);
    }
    case 2: {
      float best = 0.0f;
      for (int i = 0; i < s.n_points; ++i) {
        const auto& p = s.points[static_cast<std::size_t>(i)];
        float dz = planar ? 0.0f : (uz - p[0]) / (2.5f * s.ah);
        float dh = (uh - p[1]) / s.ah;
        float dw = (uw - p[2]) / s.ah;
        float r = std::sqrt(dz * dz + dh * dh + dw * dw);
        best = std::max(best, smoothstep01((1.0f - r) / 0.35f));
      }
      return s.amplitude * best;
    }
    case 3: {
      if (uw < 0.70f) return 0.0f;
      float lin = (uw - 0.70f) / 0.30f;        // 0 at the wedge tip, 1 at the edge
      float depth = std::sqrt(lin);            // flat-topped ramp, bright well before the edge
      float half_h = s.ah * depth + 0.015f;
      float band = smoothstep01((1.0f - std::fabs(uh - s.ch) / half_h) / 0.3f);
      float zin = planar ? 1.0f : smoothstep01((0.30f - std::fabs(uz - 0.5f)) / 0.1f);
      return s.amplitude * depth * band * zin;
    }
    case 4: {
      float corner_w = s.aux < 0.5f ? 0.0f : 1.0f;
      float dh = (uh - 1.0f) / s.ah;
      float dw = (uw - corner_w) / s.ah;
      float r = std::sqrt(dh * dh + dw * dw);
      float zin = planar ? 1.0f : smoothstep01((0.30f - std::fabs(uz - 0.5f)) / 0.1f);
      return s.amplitude * smoothstep01((1.0f - r) / feather) * zin;
    }
    default:
      return 0.0f;
  }
}

float label_amplitude(int label, Modality m) {
  static constexpr std::array<float, kNumLabels> k2d{420.0f, 300.0f, 420.0f, 560.0f, 420.0f};
  static constexpr std::array<float, kNumLabels> k3d{560.0f, 380.0f, 620.0f, 600.0f, 540.0f};
  return m == Modality::xray2d ? k2d[static_cast<std::size_t>(label)]
                               : k3d[static_cast<std::size_t>(label)];
}

}  // namespace

SyntheticSample gen_synthetic_sample(std::uint64_t seed, Modality modality, std::int64_t index,
                                     const SyntheticConfig& cfg) {
  const bool planar = modality == Modality::xray2d;
  SyntheticSample sample;
  sample.id = index;

  Rng label_rng = Rng::derive(seed, "labels", static_cast<std::uint64_t>(index));
  for (int l = 0; l < kNumLabels; ++l) {
    sample.labels[static_cast<std::size_t>(l)] = label_rng.next_float() < cfg.label_rate;
  }

  std::vector<Structure> active;
  for (int l = 0; l < kNumLabels; ++l) {
    if (sample.labels[static_cast<std::size_t>(l)]) {
      active.push_back(draw_structure(seed, index, l, label_amplitude(l, modality)));
    }
  }

  Volume& v = sample.volume;
  v.c = 1;
  v.z = planar ? 1 : cfg.size_3d;
  v.h = planar ? cfg.size_2d : cfg.size_3d;
  v.w = v.h;
  v.modality = modality;
  v.native_lo = planar ? 0.0f : -1000.0f;
  v.native_hi = planar ? 1400.0f : 1500.0f;
  v.data.resize(static_cast<std::size_t>(v.voxels()));
  if (cfg.with_masks) sample.structure_mask.assign(v.data.size(), 0);

  const BackgroundProfile prof = background_profile(modality, cfg.shifted_background);
  Rng bg_rng = Rng::derive(seed, "background", static_cast<std::uint64_t>(index),
                           static_cast<std::uint64_t>(modality));
  NoiseOctave oct0(bg_rng, 4, planar);
  NoiseOctave oct1(bg_rng, 7, planar);
  NoiseOctave oct2(bg_rng, 13, planar);
  Rng tex_rng = Rng::derive(seed, "texture", static_cast<std::uint64_t>(index),
                            static_cast<std::uint64_t>(modality));
  // Per-sample brightness jitter: global mean carries no label signal.
  const float base_jitter = bg_rng.uniform(-110.0f, 110.0f);

  std::size_t at = 0;
  for (int zi = 0; zi < v.z; ++zi) {
    const float uz = planar ? 0.5f : (zi + 0.5f) / static_cast<float>(v.z);
    for (int hi = 0; hi < v.h; ++hi) {
      const float uh = (hi + 0.5f) / static_cast<float>(v.h);
      for (int wi = 0; wi < v.w; ++wi, ++at) {
        const float uw = (wi + 0.5f) / static_cast<float>(v.w);
        float value = prof.base + base_jitter +
                      prof.amplitude * (prof.octave_weights[0] * oct0.at(uz, uh, uw) +
                                        prof.octave_weights[1] * oct1.at(uz, uh, uw) +
                                        prof.octave_weights[2] * oct2.at(uz, uh, uw)) +
                      prof.texture_sigma * 1.7320508f * (tex_rng.next_float() * 2.0f - 1.0f);
        float planted = 0.0f;
        for (const Structure& s : active) {
          planted += structure_value(s, uz, uh, uw, planar);
        }
        value += planted;
        if (cfg.with_masks && planted > 0.25f * prof.amplitude) {
          sample.structure_mask[at] = 1;
        }
        v.data[at] = value;
      }
    }
  }
  return sample;
}

std::vector<SyntheticSample> gen_synthetic(std::uint64_t seed, Modality modality, int n,
                                           const SyntheticConfig& cfg) {
  if (n < 1) fail("gen_synthetic: n must be >= 1");
  std::vector<SyntheticSample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    samples.push_back(gen_synthetic_sample(seed, modality, i, cfg));
  }
  return samples;
}

}  // namespace mmv
