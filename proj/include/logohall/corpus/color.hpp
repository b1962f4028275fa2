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
#include "logohall/common/rng.hpp"
#include "logohall/corpus/buckets.hpp"
#include "logohall/corpus/image.hpp"

namespace logohall {

struct HsvPixel {
  double h = 0.0;  // degrees, [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

// Hexcone conversion. Hue of an achromatic pixel is defined as 0.
inline HsvPixel rgb_to_hsv(Rgb p) {
  const int mx = std::max({p.r, p.g, p.b});
  const int mn = std::min({p.r, p.g, p.b});
  const double delta = mx - mn;
  HsvPixel out;
  out.v = mx / 255.0;
  out.s = mx == 0 ? 0.0 : delta / mx;
  if (delta == 0) return out;
  double h;
  if (mx == p.r)
    h = 60.0 * std::fmod((p.g - p.b) / delta, 6.0);
  else if (mx == p.g)
    h = 60.0 * ((p.b - p.r) / delta + 2.0);
  else
    h = 60.0 * ((p.r - p.g) / delta + 4.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

using Point3 = std::array<double, 3>;

struct KMeansResult {
  std::vector<Point3> centroids;
  std::vector<std::size_t> assignment;            // cluster index per point
  std::vector<std::vector<std::size_t>> members;  // point indices per cluster, ascending
  int iterations = 0;
  bool converged = false;                         // assignment fixpoint reached
  std::vector<double> cost_history;               // total within-cluster sq. distance per iteration
};

namespace detail {

inline double sq_dist(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

inline std::size_t nearest(const Point3& p, const std::vector<Point3>& centroids, double* dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {  // strict: lowest index wins ties
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding.
///
/// Runs until the assignment reaches a fixpoint or 100 iterations. A cluster
/// that empties out is repaired by moving the point farthest from its own
/// centroid into it. When every point coincides there is nothing to move and
/// the surplus clusters stay empty (their centroids duplicate the shared
/// point).
inline KMeansResult kmeans(const std::vector<Point3>& points, std::size_t k, std::uint64_t seed) {
  constexpr int kMaxIterations = 100;
  // Below this a point is treated as sitting on its centroid (mean rounding).
  constexpr double kMinRepairSqDist = 1e-24;
  if (k == 0) throw ConfigError("kmeans: k must be >= 1");
  if (points.size() < k)
    throw ConfigError("kmeans: " + std::to_string(points.size()) + " points is fewer than k=" +
                      std::to_string(k));
  const std::size_t n = points.size();
  Rng rng(seed);

  KMeansResult res;
  res.centroids.reserve(k);
  res.centroids.push_back(points[rng.uniform_index(n)]);
  std::vector<double> d2(n);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      detail::nearest(points[i], res.centroids, &d2[i]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    res.centroids.push_back(points[pick]);
  }

  res.assignment.assign(n, k);  // sentinel: unassigned
  std::vector<double> dist(n);
  for (int iter = 1; iter <= kMaxIterations; ++iter) {
    bool changed = false;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = detail::nearest(points[i], res.centroids, &dist[i]);
      if (c != res.assignment[i]) changed = true;
      res.assignment[i] = c;
      cost += dist[i];
    }
    res.cost_history.push_back(cost);
    res.iterations = iter;
    if (!changed) {
      res.converged = true;
      break;
    }

    std::vector<Point3> sums(k, Point3{0.0, 0.0, 0.0});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[res.assignment[i]];
      for (int j = 0; j < 3; ++j) s[j] += points[i][j];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (int j = 0; j < 3; ++j) res.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    // Empty-cluster repair against the updated centroids.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[res.assignment[i]] <= 1) continue;
        const double d = detail::sq_dist(points[i], res.centroids[res.assignment[i]]);
        if (d > far_d && d > kMinRepairSqDist) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) continue;  // all remaining points coincide with their centroids
      --counts[res.assignment[far]];
      res.assignment[far] = c;
      counts[c] = 1;
      res.centroids[c] = points[far];
    }
  }

  res.members.assign(k, {});
  for (std::size_t i = 0; i < n; ++i) res.members[res.assignment[i]].push_back(i);
  for (std::size_t c = 0; c < k; ++c) {
    if (res.members[c].empty()) continue;
    Point3 m{0.0, 0.0, 0.0};
    for (auto i : res.members[c])
      for (int j = 0; j < 3; ++j) m[j] += points[i][j];
    for (int j = 0; j < 3; ++j) m[j] /= static_cast<double>(res.members[c].size());
    res.centroids[c] = m;
  }
  return res;
}

struct ColorCluster {
  std::size_t size = 0;
  double mean_hue = 0.0;  // circular mean, degrees
  double mean_s = 0.0;
  double mean_v = 0.0;
};

struct DominantColor {
  ColorBucket bucket = ColorBucket::BlackWhite;
  std::vector<std::string> flags;      // e.g. "unassigned_hue"
  std::vector<ColorCluster> clusters;  // ordered by size descending, ties by cluster index
  std::size_t decided_by = 0;          // index into clusters; == clusters.size() when nothing matched
};

inline constexpr std::uint64_t kDefaultColorSeed = 0x5eed'c010'0000'0003ULL;

enum class HueVerdict { Assigned, Defer, UnassignedHue };

// Bucket rule for a single cluster summary.
inline HueVerdict bucket_for_cluster(const ColorCluster& c, ColorBucket* out) {
  if (c.mean_v < 0.2) {
    *out = ColorBucket::BlackWhite;
    return HueVerdict::Assigned;
  }
  if (c.mean_s < 0.2) {
    *out = ColorBucket::Silver;
    return HueVerdict::Assigned;
  }
  const double h = c.mean_hue;
  if (h >= 15.0 && h < 75.0) {
    *out = ColorBucket::Yellow;
    return HueVerdict::Assigned;
  }
  if (h >= 75.0 && h < 165.0) {
    if (c.mean_s > 0.2 && c.mean_v > 0.2) {
      *out = ColorBucket::Green;
      return HueVerdict::Assigned;
    }
    return HueVerdict::Defer;
  }
  if (h >= 165.0 && h < 255.0) {
    *out = ColorBucket::Blue;
    return HueVerdict::Assigned;
  }
  if (h >= 345.0 || h < 15.0) {
    if (c.mean_s > 0.2 && c.mean_v > 0.2) {
      *out = ColorBucket::Red;
      return HueVerdict::Assigned;
    }
    return HueVerdict::Defer;
  }
  return HueVerdict::UnassignedHue;  // [255, 345)
}

/// Dominant color bucket of a logo crop.
///
/// Pixels (opaque ones only, when the image has alpha) are clustered with
/// K=3 k-means in the HSV cylinder (s*cos h, s*sin h, v), which keeps reds
/// near 0 and 360 degrees together. Clusters are visited from largest to
/// smallest and the first one that maps to a bucket decides. Clusters with a
/// hue in the [255, 345) gap are skipped and the result is flagged
/// `unassigned_hue`; if nothing matches the result is BlackWhite.
inline DominantColor dominant_color(const ImageBuffer& img, std::uint64_t seed = kDefaultColorSeed) {
  if (img.empty()) throw ConfigError("dominant_color: empty image");
  std::vector<HsvPixel> hsv;
  hsv.reserve(static_cast<std::size_t>(img.width()) * img.height());
  for (int pass = 0; pass < 2 && hsv.empty(); ++pass) {
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        if (pass == 1 || img.opaque(x, y)) hsv.push_back(rgb_to_hsv(img.rgb(x, y)));
  }
  std::vector<Point3> pts;
  pts.reserve(hsv.size());
  for (const auto& p : hsv) {
    const double rad = p.h * std::numbers::pi / 180.0;
    pts.push_back({p.s * std::cos(rad), p.s * std::sin(rad), p.v});
  }
  const auto km = kmeans(pts, std::min<std::size_t>(3, pts.size()), seed);

  std::vector<std::size_t> order(km.members.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return km.members[a].size() > km.members[b].size();
  });

  DominantColor out;
  for (auto c : order) {
    if (km.members[c].empty()) continue;
    ColorCluster cl;
    cl.size = km.members[c].size();
    double sx = 0.0, sy = 0.0;
    for (auto i : km.members[c]) {
      const double rad = hsv[i].h * std::numbers::pi / 180.0;
      sx += std::cos(rad);
      sy += std::sin(rad);
      cl.mean_s += hsv[i].s;
      cl.mean_v += hsv[i].v;
    }
    cl.mean_s /= static_cast<double>(cl.size);
    cl.mean_v /= static_cast<double>(cl.size);
    double h = std::atan2(sy, sx) * 180.0 / std::numbers::pi;
    if (std::abs(sx) < 1e-12 && std::abs(sy) < 1e-12) h = 0.0;
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    cl.mean_hue = h;
    out.clusters.push_back(cl);
  }

  out.decided_by = out.clusters.size();
  bool gap = false;
  for (std::size_t i = 0; i < out.clusters.size(); ++i) {
    ColorBucket b{};
    const auto verdict = bucket_for_cluster(out.clusters[i], &b);
    if (verdict == HueVerdict::Assigned) {
      out.bucket = b;
      out.decided_by = i;
      break;
    }
    if (verdict == HueVerdict::UnassignedHue) gap = true;
  }
  if (out.decided_by == out.clusters.size()) out.bucket = ColorBucket::BlackWhite;
  if (gap) out.flags.emplace_back("unassigned_hue");
  return out;
}

}  // namespace logohall
