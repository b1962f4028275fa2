#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "logohall/common/error.hpp"
#include "logohall/corpus/buckets.hpp"
#include "logohall/corpus/image.hpp"

namespace logohall {

struct PointD {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PointD&, const PointD&) = default;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 1 = foreground, row-major

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  bool get(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height && data[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set(int x, int y, bool v = true) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }
};

inline std::vector<std::uint8_t> to_grayscale(const ImageBuffer& img) {
  std::vector<std::uint8_t> g(static_cast<std::size_t>(img.width()) * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto p = img.rgb(x, y);
      // ITU-R BT.601 luma, integer rounding.
      g[static_cast<std::size_t>(y) * img.width() + x] =
          static_cast<std::uint8_t>((299 * p.r + 587 * p.g + 114 * p.b + 500) / 1000);
    }
  }
  return g;
}

// Otsu threshold t: the two classes are {g <= t} and {g > t}.
inline int otsu_threshold(const std::vector<std::uint8_t>& gray) {
  std::array<double, 256> hist{};
  for (auto g : gray) hist[g] += 1.0;
  const double total = static_cast<double>(gray.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  if (best < 0.0) {  // single gray level: everything is one class
    best_t = 255;
  }
  return best_t;
}

/// Foreground mask for shape analysis: Otsu threshold on luma, foreground is
/// the darker class unless it covers less than 10% of the crop, in which case
/// the classes are swapped. Transparent pixels are always background.
inline BinaryMask binarize(const ImageBuffer& img) {
  const auto gray = to_grayscale(img);
  const int t = otsu_threshold(gray);
  BinaryMask mask(img.width(), img.height());
  std::size_t fg = 0, opaque = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!img.opaque(x, y)) continue;
      ++opaque;
      if (gray[static_cast<std::size_t>(y) * img.width() + x] <= t) {
        mask.set(x, y);
        ++fg;
      }
    }
  }
  if (opaque > 0 && static_cast<double>(fg) < 0.1 * static_cast<double>(opaque)) {
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        if (img.opaque(x, y)) mask.set(x, y, !mask.get(x, y));
  }
  return mask;
}

// Closed contour of pixel centers; the last point connects back to the first.
using Contour = std::vector<PointD>;

namespace detail {

// Clockwise on screen (y grows downward), starting east.
inline constexpr std::array<int, 8> kDx{1, 1, 0, -1, -1, -1, 0, 1};
inline constexpr std::array<int, 8> kDy{0, 1, 1, 1, 0, -1, -1, -1};

inline int direction_of(int dx, int dy) {
  for (int i = 0; i < 8; ++i)
    if (kDx[i] == dx && kDy[i] == dy) return i;
  return -1;
}

inline Contour moore_trace(const BinaryMask& m, int sx, int sy) {
  Contour out;
  out.push_back({static_cast<double>(sx), static_cast<double>(sy)});
  int cx = sx, cy = sy;
  int back = 4;  // west of a raster-first pixel is background
  int first_x = -1, first_y = -1;
  const std::size_t limit = 4 * m.data.size() + 8;
  for (std::size_t step = 0; step < limit; ++step) {
    int found = -1;
    for (int i = 1; i <= 8; ++i) {
      const int d = (back + i) % 8;
      if (m.get(cx + kDx[d], cy + kDy[d])) {
        found = d;
        break;
      }
    }
    if (found < 0) return out;  // isolated pixel
    const int nx = cx + kDx[found], ny = cy + kDy[found];
    if (cx == sx && cy == sy) {
      if (first_x < 0) {
        first_x = nx;
        first_y = ny;
      } else if (nx == first_x && ny == first_y) {
        return out;  // Jacob's stopping criterion
      }
    }
    // The last background cell examined becomes the new backtrack.
    const int prev = (found + 7) % 8;
    const int bx = cx + kDx[prev], by = cy + kDy[prev];
    back = direction_of(bx - nx, by - ny);
    cx = nx;
    cy = ny;
    if (!(cx == sx && cy == sy)) out.push_back({static_cast<double>(cx), static_cast<double>(cy)});
  }
  return out;
}

}  // namespace detail

/// Outer borders of every 8-connected foreground component, in raster order
/// of each component's first pixel.
inline std::vector<Contour> trace_contours(const BinaryMask& mask) {
  std::vector<int> label(mask.data.size(), -1);
  std::vector<Contour> contours;
  std::vector<std::pair<int, int>> stack;
  int next = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * mask.width + x;
      if (!mask.data[idx] || label[idx] >= 0) continue;
      const int id = next++;
      label[idx] = id;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        auto [px, py] = stack.back();
        stack.pop_back();
        for (int d = 0; d < 8; ++d) {
          const int qx = px + detail::kDx[d], qy = py + detail::kDy[d];
          if (!mask.get(qx, qy)) continue;
          const std::size_t q = static_cast<std::size_t>(qy) * mask.width + qx;
          if (label[q] >= 0) continue;
          label[q] = id;
          stack.emplace_back(qx, qy);
        }
      }
      contours.push_back(detail::moore_trace(mask, x, y));
    }
  }
  if (contours.empty()) throw ConfigError("trace_contour: mask has no foreground");
  return contours;
}

// Shoelace area, absolute value.
inline double polygon_area(const std::vector<PointD>& poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return std::abs(a) / 2.0;
}

inline double closed_perimeter(const std::vector<PointD>& poly) {
  double len = 0.0;
  const std::size_t n = poly.size();
  if (n < 2) return 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    len += std::hypot(q.x - p.x, q.y - p.y);
  }
  return len;
}

// Index of the largest contour by enclosed area; lowest index on ties.
inline std::size_t largest_contour(const std::vector<Contour>& contours) {
  std::size_t best = 0;
  double best_area = -1.0;
  for (std::size_t i = 0; i < contours.size(); ++i) {
    const double a = polygon_area(contours[i]);
    if (a > best_area) {
      best_area = a;
      best = i;
    }
  }
  return best;
}

inline double point_segment_distance(const PointD& p, const PointD& a, const PointD& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  if (len2 == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  double t = ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

/// Douglas-Peucker simplification of an open polyline. Keeps both endpoints;
/// distances are measured to the retained segment (not its infinite line), so
/// every dropped point is within epsilon of the output chain.
inline std::vector<PointD> douglas_peucker(const std::vector<PointD>& pts, double epsilon) {
  if (pts.size() < 2) throw ConfigError("douglas_peucker: need at least 2 points");
  if (!(epsilon > 0.0)) throw ConfigError("douglas_peucker: epsilon must be > 0");
  std::vector<char> keep(pts.size(), 0);
  keep[0] = 1;
  keep[pts.size() - 1] = 1;
  std::vector<std::pair<std::size_t, std::size_t>> work{{0, pts.size() - 1}};
  while (!work.empty()) {
    auto [lo, hi] = work.back();
    work.pop_back();
    if (hi <= lo + 1) continue;
    double dmax = -1.0;
    std::size_t imax = lo;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double d = point_segment_distance(pts[i], pts[lo], pts[hi]);
      if (d > dmax) {
        dmax = d;
        imax = i;
      }
    }
    if (dmax > epsilon) {
      keep[imax] = 1;
      work.emplace_back(imax, hi);
      work.emplace_back(lo, imax);
    }
  }
  std::vector<PointD> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (keep[i]) out.push_back(pts[i]);
  return out;
}

// Closed-curve variant: split at the first point and the point farthest from
// it, simplify both halves, and join without repeating the split points.
inline std::vector<PointD> simplify_closed(const Contour& c, double epsilon) {
  if (c.size() < 3) return c;
  std::size_t far = 0;
  double far_d = -1.0;
  for (std::size_t i = 1; i < c.size(); ++i) {
    const double d = std::hypot(c[i].x - c[0].x, c[i].y - c[0].y);
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  std::vector<PointD> first(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(far) + 1);
  std::vector<PointD> second(c.begin() + static_cast<std::ptrdiff_t>(far), c.end());
  second.push_back(c.front());
  auto a = douglas_peucker(first, epsilon);
  auto b = douglas_peucker(second, epsilon);
  a.pop_back();  // `far`, repeated as b.front()
  b.pop_back();  // c.front(), repeated as a.front()
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

struct EllipseFit {
  double area = 0.0;          // area of the covering ellipse
  double aspect_ratio = 1.0;  // major / minor axis
};

/// Ellipse from the second-order area moments of the polygon, scaled so that
/// every contour vertex lies inside it.
inline EllipseFit covering_moment_ellipse(const std::vector<PointD>& poly) {
  const std::size_t n = poly.size();
  double a = 0.0, cx = 0.0, cy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    const double cr = p.x * q.y - q.x * p.y;
    a += cr;
    cx += (p.x + q.x) * cr;
    cy += (p.y + q.y) * cr;
    sxx += (p.x * p.x + p.x * q.x + q.x * q.x) * cr;
    syy += (p.y * p.y + p.y * q.y + q.y * q.y) * cr;
    sxy += (p.x * q.y + 2 * p.x * p.y + 2 * q.x * q.y + q.x * p.y) * cr;
  }
  a /= 2.0;
  EllipseFit fit;
  if (std::abs(a) < 1e-12) {
    fit.area = 0.0;
    fit.aspect_ratio = std::numeric_limits<double>::infinity();
    return fit;
  }
  cx /= 6.0 * a;
  cy /= 6.0 * a;
  // Central second moments (covariance of the uniform region).
  const double mxx = sxx / (12.0 * a) - cx * cx;
  const double myy = syy / (12.0 * a) - cy * cy;
  const double mxy = sxy / (24.0 * a) - cx * cy;
  const double tr = mxx + myy;
  const double disc = std::sqrt(std::max(0.0, (mxx - myy) * (mxx - myy) / 4.0 + mxy * mxy));
  const double l1 = tr / 2.0 + disc, l2 = tr / 2.0 - disc;
  if (!(l2 > 0.0)) {
    fit.area = 0.0;
    fit.aspect_ratio = std::numeric_limits<double>::infinity();
    return fit;
  }
  // Principal axis direction for l1.
  const double theta = 0.5 * std::atan2(2.0 * mxy, mxx - myy);
  const double c = std::cos(theta), s = std::sin(theta);
  // A uniform ellipse with semi-axes (p, q) has variances p^2/4, q^2/4.
  const double ax = 2.0 * std::sqrt(l1), ay = 2.0 * std::sqrt(l2);
  double scale = 0.0;
  for (const auto& p : poly) {
    const double dx = p.x - cx, dy = p.y - cy;
    const double u = dx * c + dy * s, v = -dx * s + dy * c;
    scale = std::max(scale, std::sqrt(u * u / (ax * ax) + v * v / (ay * ay)));
  }
  fit.area = std::numbers::pi * ax * ay * scale * scale;
  fit.aspect_ratio = ax / ay;
  return fit;
}

// Interior angle at vertex b of the path a-b-c, degrees.
inline double interior_angle_deg(const PointD& a, const PointD& b, const PointD& c) {
  const double ux = a.x - b.x, uy = a.y - b.y, vx = c.x - b.x, vy = c.y - b.y;
  const double nu = std::hypot(ux, uy), nv = std::hypot(vx, vy);
  if (nu == 0.0 || nv == 0.0) return 0.0;
  const double cosang = std::clamp((ux * vx + uy * vy) / (nu * nv), -1.0, 1.0);
  return std::acos(cosang) * 180.0 / std::numbers::pi;
}

struct ShapeAnalysis {
  ShapeBucket bucket = ShapeBucket::Irregular;
  double ellipse_ratio = 0.0;  // contour area / covering ellipse area
  double aspect_ratio = 0.0;
  std::size_t vertices = 0;    // after simplification (0 if decided as Circle)
};

/// Global-silhouette bucket of the largest contour in a mask.
inline ShapeAnalysis classify_shape(const BinaryMask& mask) {
  const auto contours = trace_contours(mask);
  const auto& c = contours[largest_contour(contours)];
  ShapeAnalysis out;
  const double area = polygon_area(c);
  const auto ell = covering_moment_ellipse(c);
  out.ellipse_ratio = ell.area > 0.0 ? area / ell.area : 0.0;
  out.aspect_ratio = ell.aspect_ratio;
  if (out.ellipse_ratio >= 0.9 && out.aspect_ratio < 1.5) {
    out.bucket = ShapeBucket::Circle;
    return out;
  }
  const double perimeter = closed_perimeter(c);
  if (!(perimeter > 0.0)) {
    out.bucket = ShapeBucket::Irregular;
    return out;
  }
  const auto poly = simplify_closed(c, 0.02 * perimeter);
  out.vertices = poly.size();
  if (poly.size() == 3) {
    out.bucket = ShapeBucket::Triangle;
  } else if (poly.size() == 4) {
    bool right = true;
    for (std::size_t i = 0; i < 4; ++i) {
      const double ang = interior_angle_deg(poly[(i + 3) % 4], poly[i], poly[(i + 1) % 4]);
      if (ang < 75.0 || ang > 105.0) right = false;
    }
    out.bucket = right ? ShapeBucket::Square : ShapeBucket::Irregular;
  } else {
    out.bucket = ShapeBucket::Irregular;
  }
  return out;
}

inline ShapeAnalysis classify_shape(const ImageBuffer& img) { return classify_shape(binarize(img)); }

}  // namespace logohall
