#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace logohall {

enum class Category { PureSymbol, Hybrid, PureText };
enum class ColorBucket { BlackWhite, Silver, Red, Yellow, Blue, Green };
enum class ShapeBucket { Circle, Square, Triangle, Irregular };

inline constexpr std::array<Category, 3> kAllCategories{Category::PureSymbol, Category::Hybrid,
                                                        Category::PureText};
inline constexpr std::array<ColorBucket, 6> kAllColors{ColorBucket::BlackWhite, ColorBucket::Silver,
                                                       ColorBucket::Red,        ColorBucket::Yellow,
                                                       ColorBucket::Blue,       ColorBucket::Green};
inline constexpr std::array<ShapeBucket, 4> kAllShapes{ShapeBucket::Circle, ShapeBucket::Square,
                                                       ShapeBucket::Triangle, ShapeBucket::Irregular};

constexpr std::string_view to_string(Category c) {
  switch (c) {
    case Category::PureSymbol: return "PureSymbol";
    case Category::Hybrid: return "Hybrid";
    case Category::PureText: return "PureText";
  }
  return "?";
}

constexpr std::string_view to_string(ColorBucket c) {
  switch (c) {
    case ColorBucket::BlackWhite: return "BlackWhite";
    case ColorBucket::Silver: return "Silver";
    case ColorBucket::Red: return "Red";
    case ColorBucket::Yellow: return "Yellow";
    case ColorBucket::Blue: return "Blue";
    case ColorBucket::Green: return "Green";
  }
  return "?";
}

constexpr std::string_view to_string(ShapeBucket s) {
  switch (s) {
    case ShapeBucket::Circle: return "Circle";
    case ShapeBucket::Square: return "Square";
    case ShapeBucket::Triangle: return "Triangle";
    case ShapeBucket::Irregular: return "Irregular";
  }
  return "?";
}

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view s, const std::array<Enum, N>& all) {
  for (Enum e : all)
    if (to_string(e) == s) return e;
  return std::nullopt;
}

inline std::optional<Category> parse_category(std::string_view s) { return parse_enum(s, kAllCategories); }
inline std::optional<ColorBucket> parse_color(std::string_view s) { return parse_enum(s, kAllColors); }
inline std::optional<ShapeBucket> parse_shape(std::string_view s) { return parse_enum(s, kAllShapes); }

}  // namespace logohall
