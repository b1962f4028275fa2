#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "logohall/common/digest.hpp"
#include "logohall/common/error.hpp"
#include "logohall/common/rng.hpp"
#include "logohall/corpus/image.hpp"

namespace logohall {

enum class PerturbationKind { Blur, FlipH, FlipV, InvertColor, Occlusion, Rotate180, Rotate90, RotateRandom, Sharpen };

inline constexpr std::array<PerturbationKind, 9> kAllPerturbations{
    PerturbationKind::Blur,      PerturbationKind::FlipH,     PerturbationKind::FlipV,
    PerturbationKind::InvertColor, PerturbationKind::Occlusion, PerturbationKind::Rotate180,
    PerturbationKind::Rotate90,  PerturbationKind::RotateRandom, PerturbationKind::Sharpen};

constexpr std::string_view to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::Blur: return "Blur";
    case PerturbationKind::FlipH: return "FlipH";
    case PerturbationKind::FlipV: return "FlipV";
    case PerturbationKind::InvertColor: return "InvertColor";
    case PerturbationKind::Occlusion: return "Occlusion";
    case PerturbationKind::Rotate180: return "Rotate180";
    case PerturbationKind::Rotate90: return "Rotate90";
    case PerturbationKind::RotateRandom: return "RotateRandom";
    case PerturbationKind::Sharpen: return "Sharpen";
  }
  return "?";
}

inline std::optional<PerturbationKind> parse_perturbation(std::string_view s) {
  for (auto k : kAllPerturbations)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

// Random-rotation angle range. Default draws from (0, 360); Appendix draws
// from [-45, +45].
enum class RotationProfile { Default, Appendix };

struct BlurParams {
  int kernel = 7;
  double sigma = 3.0;
};

// Hole geometry as fractions of the image size; converted to pixels at apply time.
struct OcclusionHole {
  double x = 0.0, y = 0.0;  // top-left
  double w = 0.0, h = 0.0;
};

struct OcclusionParams {
  std::vector<OcclusionHole> holes;
};

struct SharpenParams {
  double alpha = 0.2;
  double lightness = 1.0;
};

struct RotateParams {
  double angle_deg = 0.0;  // counter-clockwise on screen
};

using PerturbationParams = std::variant<std::monostate, BlurParams, OcclusionParams, SharpenParams, RotateParams>;

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::FlipH;
  PerturbationParams params;
  std::uint64_t seed = 0;
};

inline constexpr double kMaxHoleFraction = 0.30;
inline constexpr double kMinHoleFraction = 0.10;

/// Per-item seed: SHA-256 over (root seed, kind, logo id), first 8 bytes.
inline std::uint64_t derive_item_seed(std::uint64_t global_seed, std::string_view logo_id, PerturbationKind kind) {
  return first_u64_le(
      Sha256{}.field(global_seed).field(std::string_view("item-seed")).field(to_string(kind)).field(logo_id).finish());
}

// Empty string when valid, otherwise the reason.
inline std::string spec_violation(const PerturbationSpec& spec) {
  switch (spec.kind) {
    case PerturbationKind::Blur: {
      const auto* p = std::get_if<BlurParams>(&spec.params);
      if (!p) return "Blur requires BlurParams";
      if (p->kernel < 1 || p->kernel > 7 || p->kernel % 2 == 0) return "blur kernel must be odd and <= 7";
      if (!(p->sigma > 0.0)) return "blur sigma must be > 0";
      return {};
    }
    case PerturbationKind::Occlusion: {
      const auto* p = std::get_if<OcclusionParams>(&spec.params);
      if (!p) return "Occlusion requires OcclusionParams";
      if (p->holes.empty() || p->holes.size() > 3) return "occlusion hole count must be 1, 2 or 3";
      for (const auto& h : p->holes) {
        if (!(h.w > 0.0 && h.w <= kMaxHoleFraction && h.h > 0.0 && h.h <= kMaxHoleFraction))
          return "occlusion hole width/height fraction must be in (0, 0.30]";
        if (h.x < 0.0 || h.y < 0.0 || h.x > 1.0 || h.y > 1.0) return "occlusion hole origin must be in [0, 1]";
      }
      return {};
    }
    case PerturbationKind::Sharpen: {
      const auto* p = std::get_if<SharpenParams>(&spec.params);
      if (!p) return "Sharpen requires SharpenParams";
      if (p->alpha < 0.2 || p->alpha > 0.5) return "sharpen alpha must be in [0.2, 0.5]";
      if (p->lightness < 0.5 || p->lightness > 1.0) return "sharpen lightness must be in [0.5, 1.0]";
      return {};
    }
    case PerturbationKind::RotateRandom: {
      const auto* p = std::get_if<RotateParams>(&spec.params);
      if (!p) return "RotateRandom requires RotateParams";
      if (!std::isfinite(p->angle_deg)) return "rotation angle must be finite";
      return {};
    }
    default:
      if (!std::holds_alternative<std::monostate>(spec.params)) return std::string(to_string(spec.kind)) + " takes no parameters";
      return {};
  }
}

/// Draws the kind-specific parameters from the item seed.
inline PerturbationSpec resolve_spec(PerturbationKind kind, std::uint64_t item_seed,
                                     RotationProfile profile = RotationProfile::Default) {
  PerturbationSpec spec{kind, std::monostate{}, item_seed};
  Rng rng(item_seed);
  switch (kind) {
    case PerturbationKind::Blur:
      spec.params = BlurParams{};
      break;
    case PerturbationKind::Occlusion: {
      OcclusionParams p;
      const int count = static_cast<int>(rng.uniform_int(1, 3));
      for (int i = 0; i < count; ++i) {
        OcclusionHole h;
        h.h = rng.uniform(kMinHoleFraction, kMaxHoleFraction);
        h.w = rng.uniform(kMinHoleFraction, kMaxHoleFraction);
        h.y = rng.uniform() * (1.0 - h.h);
        h.x = rng.uniform() * (1.0 - h.w);
        p.holes.push_back(h);
      }
      spec.params = p;
      break;
    }
    case PerturbationKind::Sharpen:
      spec.params = SharpenParams{rng.uniform(0.2, 0.5), rng.uniform(0.5, 1.0)};
      break;
    case PerturbationKind::RotateRandom: {
      double angle = 0.0;
      if (profile == RotationProfile::Default) {
        while (angle == 0.0) angle = 360.0 * rng.uniform();
      } else {
        angle = rng.uniform(-45.0, 45.0);
      }
      spec.params = RotateParams{angle};
      break;
    }
    default:
      break;
  }
  return spec;
}

inline nlohmann::json params_to_json(const PerturbationParams& params) {
  nlohmann::json j = nlohmann::json::object();
  if (const auto* b = std::get_if<BlurParams>(&params)) {
    j["kernel"] = b->kernel;
    j["sigma"] = b->sigma;
  } else if (const auto* o = std::get_if<OcclusionParams>(&params)) {
    j["holes"] = nlohmann::json::array();
    for (const auto& h : o->holes) j["holes"].push_back({{"x", h.x}, {"y", h.y}, {"w", h.w}, {"h", h.h}});
    j["fill"] = 0;
  } else if (const auto* s = std::get_if<SharpenParams>(&params)) {
    j["alpha"] = s->alpha;
    j["lightness"] = s->lightness;
  } else if (const auto* r = std::get_if<RotateParams>(&params)) {
    j["angle_deg"] = r->angle_deg;
  }
  return j;
}

namespace detail {

inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

inline std::uint8_t clamp_round(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::floor(v + 0.5));
}

inline int color_channels(const ImageBuffer& img) { return img.has_alpha() ? 3 : img.channels(); }

inline ImageBuffer gaussian_blur(const ImageBuffer& img, const BlurParams& p) {
  const int r = p.kernel / 2;
  std::vector<double> k(static_cast<std::size_t>(p.kernel));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * p.sigma * p.sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;
  const int w = img.width(), h = img.height(), ch = img.channels(), cc = color_channels(img);
  std::vector<double> tmp(static_cast<std::size_t>(w) * h * ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < cc; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(reflect101(x + i, w), y)[c];
        tmp[img.offset(x, y) + c] = acc;
      }
  ImageBuffer out = img;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < cc; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[img.offset(x, reflect101(y + i, h)) + c];
        out.at(x, y)[c] = clamp_round(acc);
      }
  return out;
}

// 3x3 kernel (1 - a) * identity + a * [[-1,-1,-1],[-1,8+L,-1],[-1,-1,-1]].
inline ImageBuffer sharpen(const ImageBuffer& img, const SharpenParams& p) {
  std::array<double, 9> k{};
  for (auto& v : k) v = -p.alpha;
  k[4] = (1.0 - p.alpha) + p.alpha * (8.0 + p.lightness);
  const int w = img.width(), h = img.height(), cc = color_channels(img);
  ImageBuffer out = img;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < cc; ++c) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            acc += k[(dy + 1) * 3 + dx + 1] * img.at(reflect101(x + dx, w), reflect101(y + dy, h))[c];
        out.at(x, y)[c] = clamp_round(acc);
      }
  return out;
}

inline ImageBuffer remap(const ImageBuffer& img, int out_w, int out_h, auto&& source_of) {
  ImageBuffer out(out_w, out_h, img.channels());
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      auto [sx, sy] = source_of(x, y);
      std::copy_n(img.at(sx, sy), img.channels(), out.at(x, y));
    }
  return out;
}

// Bilinear rotation about the image center onto a canvas that fits the
// rotated image. Samples falling outside the source are zero in every channel.
inline ImageBuffer rotate_arbitrary(const ImageBuffer& img, double angle_deg) {
  const double t = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const int w = img.width(), h = img.height(), ch = img.channels();
  const int ow = std::max(1, static_cast<int>(std::ceil(w * std::abs(c) + h * std::abs(s) - 1e-9)));
  const int oh = std::max(1, static_cast<int>(std::ceil(w * std::abs(s) + h * std::abs(c) - 1e-9)));
  const double icx = (w - 1) / 2.0, icy = (h - 1) / 2.0;
  const double ocx = (ow - 1) / 2.0, ocy = (oh - 1) / 2.0;
  constexpr double kEdge = 1e-9;
  ImageBuffer out(ow, oh, ch);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double u = x - ocx, v = y - ocy;
      // Inverse of a counter-clockwise screen rotation.
      const double sx = u * c - v * s + icx;
      const double sy = u * s + v * c + icy;
      if (sx < -kEdge || sy < -kEdge || sx > w - 1 + kEdge || sy > h - 1 + kEdge) continue;
      const double fx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const double fy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double ax = fx - x0, ay = fy - y0;
      for (int k = 0; k < ch; ++k) {
        const double top = (1 - ax) * img.at(x0, y0)[k] + ax * img.at(x1, y0)[k];
        const double bot = (1 - ax) * img.at(x0, y1)[k] + ax * img.at(x1, y1)[k];
        out.at(x, y)[k] = clamp_round((1 - ay) * top + ay * bot);
      }
    }
  return out;
}

}  // namespace detail

// Pixel rectangle of a hole on a w x h image, clipped to the image.
struct PixelRect {
  int x = 0, y = 0, w = 0, h = 0;
};

inline PixelRect hole_pixels(const OcclusionHole& hole, int width, int height) {
  PixelRect r;
  r.w = std::max(1, static_cast<int>(std::floor(hole.w * width)));
  r.h = std::max(1, static_cast<int>(std::floor(hole.h * height)));
  r.x = static_cast<int>(std::floor(hole.x * width));
  r.y = static_cast<int>(std::floor(hole.y * height));
  r.x = std::clamp(r.x, 0, width - 1);
  r.y = std::clamp(r.y, 0, height - 1);
  r.w = std::min(r.w, width - r.x);
  r.h = std::min(r.h, height - r.y);
  return r;
}

/// Applies one perturbation. Photometric kinds leave an alpha channel as is;
/// occlusion holes are black in the color channels.
inline ImageBuffer apply_perturbation(const PerturbationSpec& spec, const ImageBuffer& img) {
  if (auto why = spec_violation(spec); !why.empty()) throw ConfigError("invalid perturbation spec: " + why);
  if (img.empty()) throw ConfigError("apply_perturbation: empty image");
  const int w = img.width(), h = img.height();
  switch (spec.kind) {
    case PerturbationKind::FlipH:
      return detail::remap(img, w, h, [&](int x, int y) { return std::pair{w - 1 - x, y}; });
    case PerturbationKind::FlipV:
      return detail::remap(img, w, h, [&](int x, int y) { return std::pair{x, h - 1 - y}; });
    case PerturbationKind::Rotate180:
      return detail::remap(img, w, h, [&](int x, int y) { return std::pair{w - 1 - x, h - 1 - y}; });
    case PerturbationKind::Rotate90:  // clockwise
      return detail::remap(img, h, w, [&](int x, int y) { return std::pair{y, h - 1 - x}; });
    case PerturbationKind::InvertColor: {
      ImageBuffer out = img;
      const int cc = detail::color_channels(img);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < cc; ++c) out.at(x, y)[c] = static_cast<std::uint8_t>(255 - out.at(x, y)[c]);
      return out;
    }
    case PerturbationKind::Occlusion: {
      ImageBuffer out = img;
      const int cc = detail::color_channels(img);
      for (const auto& hole : std::get<OcclusionParams>(spec.params).holes) {
        const auto r = hole_pixels(hole, w, h);
        for (int y = r.y; y < r.y + r.h; ++y)
          for (int x = r.x; x < r.x + r.w; ++x)
            for (int c = 0; c < cc; ++c) out.at(x, y)[c] = 0;
      }
      return out;
    }
    case PerturbationKind::Blur:
      return detail::gaussian_blur(img, std::get<BlurParams>(spec.params));
    case PerturbationKind::Sharpen:
      return detail::sharpen(img, std::get<SharpenParams>(spec.params));
    case PerturbationKind::RotateRandom:
      return detail::rotate_arbitrary(img, std::get<RotateParams>(spec.params).angle_deg);
  }
  throw ConfigError("apply_perturbation: unknown kind");
}

// Convenience: resolve parameters for (root seed, logo, kind) and apply.
inline std::pair<ImageBuffer, PerturbationSpec> perturb_item(const ImageBuffer& img, std::uint64_t root_seed,
                                                             std::string_view logo_id, PerturbationKind kind,
                                                             RotationProfile profile = RotationProfile::Default) {
  auto spec = resolve_spec(kind, derive_item_seed(root_seed, logo_id, kind), profile);
  return {apply_perturbation(spec, img), std::move(spec)};
}

}  // namespace logohall
