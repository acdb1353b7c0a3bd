#include "mmv/views.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmv/rng.hpp"

namespace mmv {

void ViewConfig::validate() const {
  if (n_global < 1) fail("at least one global view is required");
  if (n_local < 0) fail("local view count must be >= 0");
  auto check_range = [](float lo, float hi, const char* what) {
    if (!(lo > 0.0f) || !(hi <= 1.0f) || lo > hi) {
      fail(std::string(what) + " scale range must satisfy 0 < lo <= hi <= 1");
    }
  };
  check_range(global_scale_lo, global_scale_hi, "global");
  check_range(local_scale_lo, local_scale_hi, "local");
  if (patch < 1) fail("patch size must be >= 1");
  if (long_side_2d < patch || long_side_3d < patch) {
    fail("long-side targets must be at least the patch size");
  }
}

Volume normalize_xray(const Volume& image) {
  image.validate();
  float lo = image.data[0], hi = image.data[0];
  for (float v : image.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Volume out = image;
  out.native_lo = -1.0f;
  out.native_hi = 1.0f;
  if (hi == lo) {
    std::fill(out.data.begin(), out.data.end(), 0.0f);
    return out;
  }
  const float scale = 2.0f / (hi - lo);
  for (auto& v : out.data) v = (v - lo) * scale - 1.0f;
  return out;
}

Volume normalize_ct(const Volume& volume, float width, float level) {
  volume.validate();
  if (width <= 0.0f) fail("CT window width must be positive");
  const float lo = level - width / 2.0f;
  const float hi = level + width / 2.0f;
  Volume out = volume;
  out.native_lo = -1.0f;
  out.native_hi = 1.0f;
  const float scale = 2.0f / (hi - lo);
  for (auto& v : out.data) {
    v = (std::clamp(v, lo, hi) - lo) * scale - 1.0f;
  }
  return out;
}

namespace {

// Continuous-coordinate resample: output center i maps to (i+0.5)*in/out-0.5.
Volume resize(const Volume& v, int nz, int nh, int nw) {
  Volume out;
  out.c = v.c;
  out.z = nz;
  out.h = nh;
  out.w = nw;
  out.modality = v.modality;
  out.native_lo = v.native_lo;
  out.native_hi = v.native_hi;
  out.data.resize(static_cast<std::size_t>(out.voxels()));
  auto prep = [](int n_out, int n_in) {
    std::vector<std::pair<int, float>> m(static_cast<std::size_t>(n_out));
    const double f = static_cast<double>(n_in) / n_out;
    for (int i = 0; i < n_out; ++i) {
      double x = (i + 0.5) * f - 0.5;
      x = std::clamp(x, 0.0, static_cast<double>(n_in - 1));
      int i0 = std::min(static_cast<int>(x), n_in - 1);
      m[static_cast<std::size_t>(i)] = {i0, static_cast<float>(x - i0)};
    }
    return m;
  };
  auto mz = prep(nz, v.z), mh = prep(nh, v.h), mw = prep(nw, v.w);
  for (int ci = 0; ci < v.c; ++ci) {
    for (int zi = 0; zi < nz; ++zi) {
      const auto [z0, tz] = mz[static_cast<std::size_t>(zi)];
      const int z1 = std::min(z0 + 1, v.z - 1);
      for (int hi = 0; hi < nh; ++hi) {
        const auto [h0, th] = mh[static_cast<std::size_t>(hi)];
        const int h1 = std::min(h0 + 1, v.h - 1);
        for (int wi = 0; wi < nw; ++wi) {
          const auto [w0, tw] = mw[static_cast<std::size_t>(wi)];
          const int w1 = std::min(w0 + 1, v.w - 1);
          auto lerp = [](float a, float b, float t) { return a + (b - a) * t; };
          const float c00 = lerp(v.at(ci, z0, h0, w0), v.at(ci, z0, h0, w1), tw);
          const float c01 = lerp(v.at(ci, z0, h1, w0), v.at(ci, z0, h1, w1), tw);
          const float c10 = lerp(v.at(ci, z1, h0, w0), v.at(ci, z1, h0, w1), tw);
          const float c11 = lerp(v.at(ci, z1, h1, w0), v.at(ci, z1, h1, w1), tw);
          out.at(ci, zi, hi, wi) = lerp(lerp(c00, c01, th), lerp(c10, c11, th), tz);
        }
      }
    }
  }
  return out;
}

Volume crop(const Volume& v, int z0, int h0, int w0, int ez, int eh, int ew) {
  Volume out;
  out.c = v.c;
  out.z = ez;
  out.h = eh;
  out.w = ew;
  out.modality = v.modality;
  out.native_lo = v.native_lo;
  out.native_hi = v.native_hi;
  out.data.resize(static_cast<std::size_t>(out.voxels()));
  for (int ci = 0; ci < v.c; ++ci) {
    for (int zi = 0; zi < ez; ++zi) {
      for (int hi = 0; hi < eh; ++hi) {
        for (int wi = 0; wi < ew; ++wi) {
          out.at(ci, zi, hi, wi) = v.at(ci, z0 + zi, h0 + hi, w0 + wi);
        }
      }
    }
  }
  return out;
}

struct AxisCrop {
  int offset = 0;
  int extent = 0;
};

// Shrink [pos, pos+ext0) symmetrically to a multiple of patch (minimum patch).
AxisCrop snap_axis(int axis_len, int pos, int ext0, int patch) {
  int ext = std::max(patch, (ext0 / patch) * patch);
  ext = std::min(ext, (axis_len / patch) * patch);
  int offset = pos + (ext0 - ext) / 2;
  offset = std::clamp(offset, 0, axis_len - ext);
  return {offset, ext};
}

}  // namespace

Volume downsize_long_side(const Volume& v, int target, int min_axis) {
  v.validate();
  if (target < 1) fail("downsize target must be >= 1");
  const bool planar = v.z == 1;
  const int long_side = planar ? std::max(v.h, v.w) : std::max({v.z, v.h, v.w});
  if (long_side == target) return v;
  const double f = static_cast<double>(target) / long_side;
  auto scaled = [f](int n) { return std::max(1, static_cast<int>(std::lround(n * f))); };
  const int nz = planar ? 1 : scaled(v.z);
  const int nh = scaled(v.h);
  const int nw = scaled(v.w);
  const int croppable = std::min({planar ? nh : nz, nh, nw});
  if (croppable < min_axis) {
    fail("downsize to long side " + std::to_string(target) + " leaves an axis of " +
         std::to_string(croppable) + ", below the required minimum " + std::to_string(min_axis));
  }
  return resize(v, nz, nh, nw);
}

Volume center_view(const Volume& v, int patch) {
  v.validate();
  const bool planar = v.z == 1;
  if ((!planar && v.z < patch) || v.h < patch || v.w < patch) {
    fail("input " + std::to_string(v.z) + "x" + std::to_string(v.h) + "x" + std::to_string(v.w) +
         " is smaller than the patch size " + std::to_string(patch));
  }
  auto axis = [patch](int len) {
    const int ext = (len / patch) * patch;
    return AxisCrop{(len - ext) / 2, ext};
  };
  const AxisCrop az = planar ? AxisCrop{0, 1} : axis(v.z);
  const AxisCrop ah = axis(v.h);
  const AxisCrop aw = axis(v.w);
  return crop(v, az.offset, ah.offset, aw.offset, az.extent, ah.extent, aw.extent);
}

ViewSet sample_views(const Volume& v, const ViewConfig& cfg, std::uint64_t rng_seed) {
  cfg.validate();
  v.validate();
  const bool planar = v.z == 1;
  if ((!planar && v.z < cfg.patch) || v.h < cfg.patch || v.w < cfg.patch) {
    fail("input " + std::to_string(v.z) + "x" + std::to_string(v.h) + "x" + std::to_string(v.w) +
         " is smaller than the patch size " + std::to_string(cfg.patch));
  }
  ViewSet set;
  set.views.reserve(static_cast<std::size_t>(cfg.n_views()));
  for (int i = 0; i < cfg.n_views(); ++i) {
    const bool global = i < cfg.n_global;
    Rng rng = Rng::derive(rng_seed, "view", static_cast<std::uint64_t>(i));
    const float s = global ? rng.uniform(cfg.global_scale_lo, cfg.global_scale_hi)
                           : rng.uniform(cfg.local_scale_lo, cfg.local_scale_hi);
    const double factor = planar ? std::sqrt(static_cast<double>(s))
                                 : std::cbrt(static_cast<double>(s));
    auto draw_axis = [&](int len) {
      const int ext0 = std::clamp(static_cast<int>(std::lround(len * factor)), 1, len);
      const int pos = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(len - ext0 + 1)));
      return snap_axis(len, pos, ext0, cfg.patch);
    };
    const AxisCrop az = planar ? AxisCrop{0, 1} : draw_axis(v.z);
    const AxisCrop ah = draw_axis(v.h);
    const AxisCrop aw = draw_axis(v.w);
    set.views.push_back(crop(v, az.offset, ah.offset, aw.offset, az.extent, ah.extent, aw.extent));
    set.is_global.push_back(global);
  }
  return set;
}

}  // namespace mmv
