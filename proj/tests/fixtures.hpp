#pragma once

// Analytic test renderings: dark shapes on a light background.

#include <cmath>
#include <numbers>
#include <vector>

#include "logohall/corpus/image.hpp"
#include "logohall/corpus/shape.hpp"

namespace logohall::testing {

inline bool inside_polygon(double x, double y, const std::vector<PointD>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

template <typename Inside>
ImageBuffer render(int w, int h, Inside inside, Rgb fg = {20, 20, 20}, Rgb bg = {250, 250, 250}) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto* p = img.at(x, y);
      const Rgb c = inside(x + 0.0, y + 0.0) ? fg : bg;
      p[0] = c.r;
      p[1] = c.g;
      p[2] = c.b;
    }
  }
  return img;
}

inline std::vector<PointD> regular_polygon(double cx, double cy, double r, int n, double rot_deg) {
  std::vector<PointD> out;
  for (int i = 0; i < n; ++i) {
    const double a = (rot_deg + 360.0 * i / n) * std::numbers::pi / 180.0;
    out.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return out;
}

inline std::vector<PointD> star(double cx, double cy, double outer, double inner, int arms, double rot_deg) {
  std::vector<PointD> out;
  for (int i = 0; i < 2 * arms; ++i) {
    const double r = (i % 2 == 0) ? outer : inner;
    const double a = (rot_deg + 180.0 * i / arms) * std::numbers::pi / 180.0;
    out.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return out;
}

inline ImageBuffer render_polygon(int w, int h, const std::vector<PointD>& poly) {
  return render(w, h, [&](double x, double y) { return inside_polygon(x, y, poly); });
}

inline ImageBuffer render_ellipse(int w, int h, double cx, double cy, double a, double b, double rot_deg) {
  const double t = rot_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  return render(w, h, [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * c + dy * s, v = -dx * s + dy * c;
    return u * u / (a * a) + v * v / (b * b) <= 1.0;
  });
}

inline ImageBuffer solid(int w, int h, Rgb c) {
  return render(w, h, [](double, double) { return true; }, c, c);
}

inline BinaryMask mask_from(const std::vector<std::string>& rows) {
  BinaryMask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.set(x, y, rows[y][x] == '#');
  return m;
}

struct ShapeFixture {
  ImageBuffer image;
  ShapeBucket expected;
  std::string name;
};

// Ten rendered fixtures per shape bucket, varying size, position and rotation.
inline std::vector<ShapeFixture> shape_fixtures() {
  std::vector<ShapeFixture> out;
  for (int i = 0; i < 10; ++i) {
    const double r = 25.0 + 4.0 * i;
    const int side = static_cast<int>(2.6 * r);
    if (i < 6) {
      out.push_back({render_ellipse(side, side, side / 2.0 + 1, side / 2.0 - 1, r, r, 0.0), ShapeBucket::Circle,
                     "disk r=" + std::to_string(r)});
    } else {
      const int big = static_cast<int>(3.0 * r);
      out.push_back({render_ellipse(big, big, big / 2.0, big / 2.0, r * 1.25, r, 30.0 * (i - 5)),
                     ShapeBucket::Circle, "ellipse 1.25 i=" + std::to_string(i)});
    }
  }
  for (int i = 0; i < 10; ++i) {
    const double r = 30.0 + 4.0 * i;  // half-diagonal
    const int side = static_cast<int>(2.4 * r);
    out.push_back({render_polygon(side, side, regular_polygon(side / 2.0, side / 2.0, r, 4, 45.0 + 9.0 * i)),
                   ShapeBucket::Square, "square rot=" + std::to_string(9 * i)});
  }
  for (int i = 0; i < 10; ++i) {
    const double r = 30.0 + 4.0 * i;
    const int side = static_cast<int>(2.4 * r);
    out.push_back({render_polygon(side, side, regular_polygon(side / 2.0, side / 2.0 + 2, r, 3, -90.0 + 12.0 * i)),
                   ShapeBucket::Triangle, "triangle rot=" + std::to_string(12 * i)});
  }
  for (int i = 0; i < 10; ++i) {
    const double r = 40.0 + 4.0 * i;
    const int side = static_cast<int>(2.3 * r);
    out.push_back({render_polygon(side, side, star(side / 2.0, side / 2.0, r, r * 0.45, 5, -90.0 + 7.0 * i)),
                   ShapeBucket::Irregular, "star rot=" + std::to_string(7 * i)});
  }
  return out;
}

}  // namespace logohall::testing
